#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "palpas/crypto.hpp"
#include "palpas/policy.hpp"

namespace palpas {

// Extra keystream bits drawn beyond log2(phi^length); bounds the modulo
// bias per character by 2^-100.
inline constexpr std::size_t kBiasMarginBits = 100;
inline constexpr std::uint32_t kMaxDrafts = 10'000;

// 100 + smallest k with 2^k >= phi^length, in exact integer arithmetic.
std::size_t required_bits(std::uint32_t phi, std::uint32_t length);

// chunk -> integer v -> the `length` low-order base-phi digits of v (which
// are the digits of v mod phi^length), most significant first.
std::u32string draft_password(const BitString& chunk, const Alphabet& alphabet,
                              std::uint32_t length);

struct GenerationResult {
  std::string password;   // UTF-8
  std::uint32_t drafts = 0;  // accepted draft is number `drafts`, 1-based
};

// Rejection sampling over consecutive fixed-width keystream chunks; the
// password length is always policy.max_length. Error(unsatisfiable_policy)
// after kMaxDrafts rejected drafts.
GenerationResult generate_password_traced(const Seed& seed, const Salt& salt,
                                          const PasswordPolicy& policy);
std::string generate_password(const Seed& seed, const Salt& salt, const PasswordPolicy& policy);

Salt generate_salt(RandomSource& rng = system_random());

// Bulk generation for one seed and policy over many salts. The OpenMP kernel
// must agree element-for-element with the serial reference.
std::vector<GenerationResult> generate_batch(const Seed& seed, std::span<const Salt> salts,
                                             const PasswordPolicy& policy);
std::vector<GenerationResult> generate_batch_serial(const Seed& seed, std::span<const Salt> salts,
                                                    const PasswordPolicy& policy);

}  // namespace palpas
