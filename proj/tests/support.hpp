#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "palpas/error.hpp"
#include "palpas/random.hpp"

namespace palpas::testing {

inline std::vector<nlohmann::json> load_vectors(const std::string& name) {
  std::ifstream in(std::string(PALPAS_VECTOR_DIR) + "/" + name);
  if (!in) throw std::runtime_error("missing vector file " + name);
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

// Deterministic stream for reproducible statistics; not for secrets.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  void fill(std::span<std::uint8_t> out) override {
    for (auto& b : out) b = static_cast<std::uint8_t>(engine_());
  }

 private:
  std::mt19937_64 engine_;
};

// Delegates to another source and records every byte handed out.
class RecordingRandom final : public RandomSource {
 public:
  explicit RecordingRandom(RandomSource& inner) : inner_(inner) {}
  void fill(std::span<std::uint8_t> out) override {
    inner_.fill(out);
    calls_.emplace_back(out.begin(), out.end());
  }
  const std::vector<std::vector<std::uint8_t>>& calls() const { return calls_; }

 private:
  RandomSource& inner_;
  std::vector<std::vector<std::uint8_t>> calls_;
};

class FailingRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t>) override {
    throw Error(ErrorKind::randomness_unavailable, "entropy source offline");
  }
};

inline bool contains(std::string_view haystack, std::string_view needle) {
  return !needle.empty() && haystack.find(needle) != std::string_view::npos;
}

}  // namespace palpas::testing
