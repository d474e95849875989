#pragma once

#include <cstdint>
#include <span>

namespace palpas {

// Source of cryptographic randomness. Every secret or salt in the system is
// drawn through this interface so tests can substitute a recording source.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;
};

// getrandom(2). Failure is fatal: Error(randomness_unavailable), never a
// fallback to a weaker generator.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

RandomSource& system_random();

}  // namespace palpas
