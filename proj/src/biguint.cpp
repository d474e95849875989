#include "palpas/biguint.hpp"

#include <bit>

namespace palpas {

BigUint::BigUint(std::uint32_t value) {
  if (value != 0) limbs_.push_back(value);
}

BigUint BigUint::from_bits(const BitString& bits) {
  BigUint out;
  out.limbs_.reserve(bits.n_bits / 32 + 1);
  const std::size_t whole = bits.n_bits / 8;
  for (std::size_t i = 0; i < whole; ++i) out.mul_add_small(256, bits.bytes[i]);
  if (const std::size_t rest = bits.n_bits % 8; rest != 0) {
    out.mul_add_small(1u << rest, static_cast<std::uint32_t>(bits.bytes[whole] >> (8 - rest)));
  }
  return out;
}

void BigUint::mul_add_small(std::uint32_t factor, std::uint32_t addend) {
  std::uint64_t carry = addend;
  for (auto& limb : limbs_) {
    const std::uint64_t v = static_cast<std::uint64_t>(limb) * factor + carry;
    limb = static_cast<std::uint32_t>(v);
    carry = v >> 32;
  }
  if (carry != 0) limbs_.push_back(static_cast<std::uint32_t>(carry));
  trim();
}

std::uint32_t BigUint::divmod_small(std::uint32_t divisor) {
  std::uint64_t rem = 0;
  for (auto it = limbs_.rbegin(); it != limbs_.rend(); ++it) {
    const std::uint64_t cur = (rem << 32) | *it;
    *it = static_cast<std::uint32_t>(cur / divisor);
    rem = cur % divisor;
  }
  trim();
  return static_cast<std::uint32_t>(rem);
}

void BigUint::sub_one() {
  for (auto& limb : limbs_) {
    if (limb-- != 0) break;
  }
  trim();
}

std::size_t BigUint::bit_length() const noexcept {
  if (limbs_.empty()) return 0;
  return 32 * (limbs_.size() - 1) + static_cast<std::size_t>(std::bit_width(limbs_.back()));
}

void BigUint::trim() noexcept {
  while (!limbs_.empty() && limbs_.back() == 0) limbs_.pop_back();
}

}  // namespace palpas
