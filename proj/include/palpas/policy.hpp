#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace palpas {

struct CharacterSet {
  std::string name;
  std::u32string characters;  // order defines the index -> character mapping
  std::uint32_t min_occurrence = 0;

  friend bool operator==(const CharacterSet&, const CharacterSet&) = default;
};

struct PasswordPolicy {
  std::uint32_t min_length = 0;
  std::uint32_t max_length = 0;
  std::vector<CharacterSet> sets;
  std::uint64_t version = 0;  // assigned by the policy service; not part of the XML

  friend bool operator==(const PasswordPolicy&, const PasswordPolicy&) = default;
};

// Concatenation of all sets' characters in declaration order.
class Alphabet {
 public:
  explicit Alphabet(const PasswordPolicy& policy);

  std::size_t size() const noexcept { return chars_.size(); }
  char32_t operator[](std::size_t index) const { return chars_[index]; }
  const std::u32string& chars() const noexcept { return chars_; }
  // Index of the set that owns c, if any.
  std::optional<std::size_t> set_of(char32_t c) const;

 private:
  std::u32string chars_;
  std::array<std::int16_t, 128> ascii_set_{};
  std::unordered_map<char32_t, std::size_t> other_set_;
};

// Throws Error(validation) naming the violated rule.
void validate_policy(const PasswordPolicy& policy);

// Error(parse) for malformed XML, Error(validation) for a well-formed
// document that violates a policy rule or the element schema.
PasswordPolicy parse_policy(std::string_view document);
std::string serialize_policy(const PasswordPolicy& policy);

bool validate_password(std::string_view password, const PasswordPolicy& policy);
bool validate_password(std::u32string_view password, const PasswordPolicy& policy,
                       const Alphabet& alphabet);

double max_entropy_bits(const PasswordPolicy& policy);

// The example policy: lower, upper, digits with at least one digit, 6..12.
PasswordPolicy example_policy();
std::string_view example_policy_document();

}  // namespace palpas
