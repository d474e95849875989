#include "palpas/generator.hpp"

#include <algorithm>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "palpas/biguint.hpp"
#include "palpas/error.hpp"

namespace palpas {

namespace {

// Everything about a policy that stays fixed across salts.
struct DraftPlan {
  explicit DraftPlan(const PasswordPolicy& p)
      : policy(p),
        alphabet(p),
        length(p.max_length),
        bits_per_draft(required_bits(static_cast<std::uint32_t>(alphabet.size()), length)) {}

  const PasswordPolicy& policy;
  Alphabet alphabet;
  std::uint32_t length;
  std::size_t bits_per_draft;
};

GenerationResult run_drafts(const Seed& seed, const Salt& salt, const DraftPlan& plan) {
  Keystream stream(seed, salt);
  for (std::uint32_t k = 0; k < kMaxDrafts; ++k) {
    const auto chunk = stream.bits(k * plan.bits_per_draft, plan.bits_per_draft);
    const auto draft = draft_password(chunk, plan.alphabet, plan.length);
    if (validate_password(draft, plan.policy, plan.alphabet)) {
      return {utf8_encode(draft), k + 1};
    }
  }
  throw Error(ErrorKind::unsatisfiable_policy,
              "no compliant password after " + std::to_string(kMaxDrafts) + " drafts");
}

}  // namespace

std::size_t required_bits(std::uint32_t phi, std::uint32_t length) {
  if (phi == 0 || length == 0) throw Error(ErrorKind::invalid_input, "phi and length must be >= 1");
  BigUint space(1);
  for (std::uint32_t i = 0; i < length; ++i) space.mul_add_small(phi, 0);
  space.sub_one();
  // smallest k with 2^k >= N is bit_length(N - 1)
  return kBiasMarginBits + space.bit_length();
}

std::u32string draft_password(const BitString& chunk, const Alphabet& alphabet,
                              std::uint32_t length) {
  const auto phi = static_cast<std::uint32_t>(alphabet.size());
  if (phi == 0) throw Error(ErrorKind::invalid_input, "empty alphabet");
  auto value = BigUint::from_bits(chunk);
  std::u32string out(length, U'\0');
  for (std::uint32_t i = length; i-- > 0;) {
    out[i] = alphabet[value.divmod_small(phi)];
  }
  return out;
}

GenerationResult generate_password_traced(const Seed& seed, const Salt& salt,
                                          const PasswordPolicy& policy) {
  validate_policy(policy);
  return run_drafts(seed, salt, DraftPlan(policy));
}

std::string generate_password(const Seed& seed, const Salt& salt, const PasswordPolicy& policy) {
  return generate_password_traced(seed, salt, policy).password;
}

Salt generate_salt(RandomSource& rng) {
  Salt salt;
  rng.fill(salt.mutable_view());
  return salt;
}

std::vector<GenerationResult> generate_batch_serial(const Seed& seed, std::span<const Salt> salts,
                                                    const PasswordPolicy& policy) {
  validate_policy(policy);
  const DraftPlan plan(policy);
  std::vector<GenerationResult> out;
  out.reserve(salts.size());
  for (const auto& salt : salts) out.push_back(run_drafts(seed, salt, plan));
  return out;
}

std::vector<GenerationResult> generate_batch(const Seed& seed, std::span<const Salt> salts,
                                             const PasswordPolicy& policy) {
  validate_policy(policy);
  const DraftPlan plan(policy);
  std::vector<GenerationResult> out(salts.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto n = static_cast<std::int64_t>(salts.size());

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_drafts(seed, salts[static_cast<std::size_t>(i)], plan);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }

  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace palpas
