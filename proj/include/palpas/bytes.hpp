#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace palpas {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);
// Throws Error(format) on odd length or non-hex digits.
Bytes from_hex(std::string_view hex);

std::string base64_encode(ByteView bytes);
// Strict standard alphabet with padding; throws Error(format).
Bytes base64_decode(std::string_view text);

bool constant_time_equal(ByteView a, ByteView b) noexcept;

inline ByteView as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Fixed-width octet string with a tag type, so a Salt cannot be passed where
// a Seed is expected.
template <std::size_t N, class Tag>
class FixedBytes {
 public:
  static constexpr std::size_t size = N;

  FixedBytes() = default;
  explicit FixedBytes(const std::array<std::uint8_t, N>& bytes) : bytes_(bytes) {}

  // Throws Error(format) when the input is not exactly N bytes.
  static FixedBytes from(ByteView bytes);
  static FixedBytes from_hex(std::string_view hex) { return from(palpas::from_hex(hex)); }

  std::span<const std::uint8_t, N> view() const noexcept { return bytes_; }
  std::span<std::uint8_t, N> mutable_view() noexcept { return bytes_; }
  const std::array<std::uint8_t, N>& array() const noexcept { return bytes_; }
  std::string hex() const { return to_hex(bytes_); }

  friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
  friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;

 private:
  std::array<std::uint8_t, N> bytes_{};
};

[[noreturn]] void throw_length_mismatch(std::size_t expected, std::size_t actual);

template <std::size_t N, class Tag>
FixedBytes<N, Tag> FixedBytes<N, Tag>::from(ByteView bytes) {
  if (bytes.size() != N) throw_length_mismatch(N, bytes.size());
  FixedBytes out;
  std::copy(bytes.begin(), bytes.end(), out.bytes_.begin());
  return out;
}

// UTF-8 <-> code points. decode throws Error(format) on malformed input.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view code_points);
bool utf8_try_decode(std::string_view text, std::u32string& out);

}  // namespace palpas
