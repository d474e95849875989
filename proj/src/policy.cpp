#include "palpas/policy.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "palpas/bytes.hpp"
#include "palpas/error.hpp"

namespace palpas {

namespace pt = boost::property_tree;

namespace {

constexpr std::uint32_t kMaxLengthLimit = 1024;

constexpr std::string_view kExampleDocument =
    "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    "<PasswordPolicy>\n"
    "\t<MinLength>6</MinLength>\n"
    "\t<MaxLength>12</MaxLength>\n"
    "\t<CharacterSets>\n"
    "\t\t<CharacterSet name=\"LowercaseLetters\">\n"
    "\t\t\t<Characters>abcdefghijklmnopqrstuvwxyz</Characters>\n"
    "\t\t</CharacterSet>\n"
    "\t\t<CharacterSet name=\"UppercaseLetters\">\n"
    "\t\t\t<Characters>ABCDEFGHIJKLMNOPQRSTUVWXYZ</Characters>\n"
    "\t\t</CharacterSet>\n"
    "\t\t<CharacterSet name=\"Digits\" minOccurrence=\"1\">\n"
    "\t\t\t<Characters>0123456789</Characters>\n"
    "\t\t</CharacterSet>\n"
    "\t</CharacterSets>\n"
    "</PasswordPolicy>\n";

[[noreturn]] void rule_violation(std::string_view rule, const std::string& detail) {
  throw Error(ErrorKind::validation, std::string(rule) + ": " + detail);
}

bool is_meta(const std::string& key) {
  return key == "<xmlattr>" || key == "<xmlcomment>";
}

std::uint32_t parse_count(const std::string& raw, std::string_view field) {
  auto begin = raw.find_first_not_of(" \t\r\n");
  auto end = raw.find_last_not_of(" \t\r\n");
  if (begin == std::string::npos) rule_violation("integer_field", std::string(field) + " is empty");
  std::string_view digits(raw.data() + begin, end - begin + 1);
  std::uint32_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    rule_violation("integer_field", std::string(field) + " is not a non-negative integer");
  }
  return value;
}

void escape_into(std::string& out, std::string_view text, bool attribute) {
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"':
        if (attribute) {
          out += "&quot;";
          break;
        }
        [[fallthrough]];
      default: out.push_back(c);
    }
  }
}

CharacterSet parse_set(const pt::ptree& node) {
  CharacterSet set;
  bool have_chars = false;
  for (const auto& [key, child] : node) {
    if (key == "<xmlattr>") {
      for (const auto& [attr, value] : child) {
        if (attr == "name") {
          set.name = value.data();
        } else if (attr == "minOccurrence") {
          set.min_occurrence = parse_count(value.data(), "minOccurrence");
        } else {
          rule_violation("schema", "unknown attribute '" + attr + "' on CharacterSet");
        }
      }
    } else if (key == "Characters") {
      if (have_chars) rule_violation("schema", "CharacterSet has more than one Characters");
      std::u32string chars;
      if (!utf8_try_decode(child.data(), chars)) rule_violation("encoding", "Characters is not UTF-8");
      set.characters = std::move(chars);
      have_chars = true;
    } else if (!is_meta(key)) {
      rule_violation("schema", "unknown element '" + key + "' in CharacterSet");
    }
  }
  if (!have_chars) rule_violation("schema", "CharacterSet without Characters");
  return set;
}

}  // namespace

Alphabet::Alphabet(const PasswordPolicy& policy) {
  ascii_set_.fill(-1);
  for (std::size_t s = 0; s < policy.sets.size(); ++s) {
    for (char32_t c : policy.sets[s].characters) {
      chars_.push_back(c);
      if (c < 128) {
        ascii_set_[c] = static_cast<std::int16_t>(s);
      } else {
        other_set_.emplace(c, s);
      }
    }
  }
}

std::optional<std::size_t> Alphabet::set_of(char32_t c) const {
  if (c < 128) {
    const auto s = ascii_set_[c];
    if (s < 0) return std::nullopt;
    return static_cast<std::size_t>(s);
  }
  if (auto it = other_set_.find(c); it != other_set_.end()) return it->second;
  return std::nullopt;
}

void validate_policy(const PasswordPolicy& policy) {
  if (policy.min_length == 0) rule_violation("min_length_positive", "MinLength must be at least 1");
  if (policy.min_length > policy.max_length) {
    rule_violation("min_length_le_max_length", "MinLength exceeds MaxLength");
  }
  if (policy.max_length > kMaxLengthLimit) {
    rule_violation("max_length_limit", "MaxLength exceeds " + std::to_string(kMaxLengthLimit));
  }
  if (policy.sets.empty()) rule_violation("at_least_one_set", "no character sets");
  std::set<char32_t> seen;
  std::uint64_t required = 0;
  for (const auto& set : policy.sets) {
    if (set.name.empty()) rule_violation("set_name_required", "CharacterSet without a name");
    if (set.characters.empty()) rule_violation("set_not_empty", "set '" + set.name + "' is empty");
    for (char32_t c : set.characters) {
      if (c < 0x20 || c == 0x7F || (c >= 0x80 && c < 0xA0)) {
        rule_violation("printable_characters", "set '" + set.name + "' contains a control character");
      }
      if (!seen.insert(c).second) {
        rule_violation("duplicate_character", "character repeated in set '" + set.name + "'");
      }
    }
    required += set.min_occurrence;
  }
  if (required > policy.max_length) {
    rule_violation("min_occurrence_sum_le_max_length", "minimum occurrences exceed MaxLength");
  }
}

PasswordPolicy parse_policy(std::string_view document) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(document)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::parse, std::string("malformed policy XML: ") + e.message());
  }

  const pt::ptree* root = nullptr;
  for (const auto& [key, child] : tree) {
    if (key == "PasswordPolicy" && root == nullptr) {
      root = &child;
    } else if (!is_meta(key)) {
      rule_violation("schema", "unexpected top-level element '" + key + "'");
    }
  }
  if (root == nullptr) rule_violation("schema", "missing PasswordPolicy root element");

  PasswordPolicy policy;
  bool have_min = false, have_max = false, have_sets = false;
  for (const auto& [key, child] : *root) {
    if (key == "MinLength" && !have_min) {
      policy.min_length = parse_count(child.data(), "MinLength");
      have_min = true;
    } else if (key == "MaxLength" && !have_max) {
      policy.max_length = parse_count(child.data(), "MaxLength");
      have_max = true;
    } else if (key == "CharacterSets" && !have_sets) {
      for (const auto& [set_key, set_node] : child) {
        if (set_key == "CharacterSet") {
          policy.sets.push_back(parse_set(set_node));
        } else if (!is_meta(set_key)) {
          rule_violation("schema", "unknown element '" + set_key + "' in CharacterSets");
        }
      }
      have_sets = true;
    } else if (!is_meta(key)) {
      rule_violation("schema", "unexpected or repeated element '" + key + "'");
    }
  }
  if (!have_min) rule_violation("schema", "missing MinLength");
  if (!have_max) rule_violation("schema", "missing MaxLength");
  if (!have_sets) rule_violation("schema", "missing CharacterSets");
  validate_policy(policy);
  return policy;
}

std::string serialize_policy(const PasswordPolicy& policy) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<PasswordPolicy>\n";
  out += "\t<MinLength>" + std::to_string(policy.min_length) + "</MinLength>\n";
  out += "\t<MaxLength>" + std::to_string(policy.max_length) + "</MaxLength>\n";
  out += "\t<CharacterSets>\n";
  for (const auto& set : policy.sets) {
    out += "\t\t<CharacterSet name=\"";
    escape_into(out, set.name, true);
    out += '"';
    if (set.min_occurrence != 0) {
      out += " minOccurrence=\"" + std::to_string(set.min_occurrence) + '"';
    }
    out += ">\n\t\t\t<Characters>";
    escape_into(out, utf8_encode(set.characters), false);
    out += "</Characters>\n\t\t</CharacterSet>\n";
  }
  out += "\t</CharacterSets>\n</PasswordPolicy>\n";
  return out;
}

bool validate_password(std::u32string_view password, const PasswordPolicy& policy,
                       const Alphabet& alphabet) {
  if (password.size() < policy.min_length || password.size() > policy.max_length) return false;
  std::vector<std::uint32_t> counts(policy.sets.size(), 0);
  for (char32_t c : password) {
    const auto set = alphabet.set_of(c);
    if (!set) return false;
    ++counts[*set];
  }
  for (std::size_t s = 0; s < policy.sets.size(); ++s) {
    if (counts[s] < policy.sets[s].min_occurrence) return false;
  }
  return true;
}

bool validate_password(std::string_view password, const PasswordPolicy& policy) {
  std::u32string decoded;
  if (!utf8_try_decode(password, decoded)) return false;
  return validate_password(decoded, policy, Alphabet(policy));
}

double max_entropy_bits(const PasswordPolicy& policy) {
  std::size_t phi = 0;
  for (const auto& set : policy.sets) phi += set.characters.size();
  if (phi <= 1) return 0.0;
  return static_cast<double>(policy.max_length) * std::log2(static_cast<double>(phi));
}

std::string_view example_policy_document() { return kExampleDocument; }

PasswordPolicy example_policy() { return parse_policy(kExampleDocument); }

}  // namespace palpas
