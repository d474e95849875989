#pragma once

#include <cstdint>
#include <vector>

#include "palpas/crypto.hpp"

namespace palpas {

// Minimal arbitrary-precision unsigned integer: exactly the operations the
// generator needs, all with single-limb operands.
class BigUint {
 public:
  BigUint() = default;
  explicit BigUint(std::uint32_t value);

  // MSB-first bit string interpreted as a big-endian integer.
  static BigUint from_bits(const BitString& bits);

  void mul_add_small(std::uint32_t factor, std::uint32_t addend);
  // In place quotient; returns the remainder.
  std::uint32_t divmod_small(std::uint32_t divisor);
  void sub_one();  // precondition: non-zero

  bool is_zero() const noexcept { return limbs_.empty(); }
  std::size_t bit_length() const noexcept;

  friend bool operator==(const BigUint&, const BigUint&) = default;

 private:
  void trim() noexcept;

  std::vector<std::uint32_t> limbs_;  // little-endian, no trailing zeros
};

}  // namespace palpas
