#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <set>

#include "palpas/biguint.hpp"
#include "palpas/error.hpp"
#include "palpas/generator.hpp"
#include "support.hpp"

using namespace palpas;
using palpas::testing::load_vectors;
using boost::multiprecision::cpp_int;

namespace {

PasswordPolicy tiny_policy() {
  return PasswordPolicy{2, 2, {{"Letters", U"abc", 0}, {"Zero", U"0", 1}}, 0};
}

BitString bits_of(std::uint64_t value, std::size_t n_bits) {
  BitString out;
  out.n_bits = n_bits;
  out.bytes.assign((n_bits + 7) / 8, 0);
  for (std::size_t i = 0; i < n_bits; ++i) {
    const std::size_t from_lsb = n_bits - 1 - i;
    if (from_lsb < 64 && ((value >> from_lsb) & 1)) out.bytes[i / 8] |= 0x80 >> (i % 8);
  }
  return out;
}

}  // namespace

TEST_CASE("required bits") {
  CHECK(required_bits(62, 10) == 160);
  CHECK(required_bits(10, 1) == 104);
  CHECK(required_bits(1, 4) == 100);
  CHECK(required_bits(62, 12) == 172);
  CHECK(required_bits(2, 8) == 108);
  CHECK(required_bits(4, 2) == 104);
  CHECK_THROWS_AS(required_bits(0, 3), Error);
}

TEST_CASE("required bits agrees with an exact big-integer ceiling") {
  for (std::uint32_t phi : {2u, 3u, 7u, 62u, 95u, 127u, 128u, 65536u, 1000003u}) {
    for (std::uint32_t len : {1u, 2u, 13u, 64u, 200u}) {
      const cpp_int space = boost::multiprecision::pow(cpp_int(phi), len);
      std::size_t k = 0;
      while ((cpp_int(1) << k) < space) ++k;
      CHECK(required_bits(phi, len) == 100 + k);
    }
  }
}

TEST_CASE("BigUint matches cpp_int on chunk conversion and digit extraction") {
  palpas::testing::SeededRandom rng(21);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n_bits = 1 + static_cast<std::size_t>(i * 7 % 400);
    BitString bits;
    bits.n_bits = n_bits;
    bits.bytes.resize((n_bits + 7) / 8);
    rng.fill(bits.bytes);
    if (const std::size_t spare = bits.bytes.size() * 8 - n_bits; spare) {
      bits.bytes.back() &= static_cast<std::uint8_t>(0xFF << spare);
    }
    cpp_int expected = 0;
    for (std::size_t b = 0; b < n_bits; ++b) {
      expected = expected * 2 + ((bits.bytes[b / 8] >> (7 - b % 8)) & 1);
    }
    auto value = BigUint::from_bits(bits);
    const std::uint32_t divisor = 2 + static_cast<std::uint32_t>(i * 977 % 100000);
    for (int d = 0; d < 5; ++d) {
      CHECK(value.divmod_small(divisor) == static_cast<std::uint32_t>(expected % divisor));
      expected /= divisor;
    }
  }
}

TEST_CASE("draft password maps digits most significant first") {
  const PasswordPolicy digits{1, 1, {{"d", U"0123456789", 0}}, 0};
  CHECK(draft_password(bits_of(7, 104), Alphabet(digits), 1) == U"7");
  CHECK(draft_password(bits_of(1237, 104), Alphabet(digits), 1) == U"7");

  const auto example = example_policy();
  const Alphabet a(example);
  CHECK(draft_password(bits_of(51, 172), a, 1) == U"Z");
  CHECK(draft_password(bits_of(61, 172), a, 2) == U"a9");
  CHECK(draft_password(bits_of(62 * 51 + 52, 172), a, 3) == U"aZ0");
}

TEST_CASE("end-to-end passwords match the straight-line oracle") {
  for (const auto& row : load_vectors("password.jsonl")) {
    const auto policy = row["policy"] == "tiny" ? tiny_policy() : example_policy();
    const auto seed = Seed::from_hex(row["seed"].get<std::string>());
    const auto salt = Salt::from_hex(row["salt"].get<std::string>());
    const auto result = generate_password_traced(seed, salt, policy);
    CHECK(result.password == row["expected_password"].get<std::string>());
    CHECK(result.drafts == row["drafts"].get<std::uint32_t>());
    CHECK(required_bits(static_cast<std::uint32_t>(Alphabet(policy).size()), policy.max_length) ==
          row["bits_per_draft"].get<std::size_t>());
  }
}

TEST_CASE("single compliant password is returned for every seed and salt") {
  const PasswordPolicy only{4, 4, {{"a", U"a", 0}}, 0};
  palpas::testing::SeededRandom rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto r = generate_password_traced(generate_seed(rng), generate_salt(rng), only);
    CHECK(r.password == "aaaa");
    CHECK(r.drafts == 1);
  }
}

TEST_CASE("generation is deterministic and compliant") {
  palpas::testing::SeededRandom rng(2);
  const auto policy = example_policy();
  for (int i = 0; i < 500; ++i) {
    const auto seed = generate_seed(rng);
    const auto salt = generate_salt(rng);
    const auto a = generate_password(seed, salt, policy);
    CHECK(a == generate_password(seed, salt, policy));
    CHECK(validate_password(a, policy));
    CHECK(utf8_decode(a).size() == policy.max_length);
  }
}

TEST_CASE("distinct salts give distinct passwords") {
  palpas::testing::SeededRandom rng(3);
  const auto seed = generate_seed(rng);
  std::vector<Salt> salts(10'000);
  for (auto& s : salts) s = generate_salt(rng);
  const auto results = generate_batch(seed, salts, example_policy());
  std::set<std::string> seen;
  for (const auto& r : results) seen.insert(r.password);
  CHECK(seen.size() == salts.size());
}

TEST_CASE("draft k consumes keystream bits [k*b, (k+1)*b)") {
  const auto policy = tiny_policy();
  const Alphabet alphabet(policy);
  const std::size_t b = required_bits(4, 2);
  palpas::testing::SeededRandom rng(4);
  int multi_draft_cases = 0;
  for (int i = 0; i < 200; ++i) {
    const auto seed = generate_seed(rng);
    const auto salt = generate_salt(rng);
    const auto result = generate_password_traced(seed, salt, policy);
    const auto stream = prg_generate(seed, salt, b * result.drafts);
    std::u32string last;
    for (std::uint32_t k = 0; k < result.drafts; ++k) {
      BitString chunk;
      chunk.n_bits = b;
      chunk.bytes.assign((b + 7) / 8, 0);
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t bit = k * b + j;
        if (stream.bytes[bit / 8] & (0x80 >> (bit % 8))) chunk.bytes[j / 8] |= 0x80 >> (j % 8);
      }
      last = draft_password(chunk, alphabet, 2);
      const bool ok = validate_password(last, policy, alphabet);
      CHECK(ok == (k + 1 == result.drafts));
    }
    CHECK(utf8_encode(last) == result.password);
    if (result.drafts > 1) ++multi_draft_cases;
  }
  CHECK(multi_draft_cases > 0);
}

TEST_CASE("unsatisfiable draft sequences hit the iteration cap") {
  // Valid policy whose compliant fraction is tiny: 30 characters with 15
  // required from a one-symbol set of 100.
  PasswordPolicy rare{30, 30, {{"rare", U"!", 15}, {"common", U"", 0}}, 0};
  for (char32_t c = U'0'; c < U'0' + 74; ++c) rare.sets[1].characters.push_back(c);
  try {
    generate_password(Seed{}, Salt{}, rare);
    FAIL("expected the cap to trigger");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsatisfiable_policy);
  }
}

TEST_CASE("OpenMP batch kernel agrees with the serial reference") {
  palpas::testing::SeededRandom rng(5);
  const auto seed = generate_seed(rng);
  std::vector<Salt> salts(2000);
  for (auto& s : salts) s = generate_salt(rng);
  for (const auto& policy : {example_policy(), tiny_policy()}) {
    const auto parallel = generate_batch(seed, salts, policy);
    const auto serial = generate_batch_serial(seed, salts, policy);
    REQUIRE(parallel.size() == serial.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      CHECK(parallel[i].password == serial[i].password);
      CHECK(parallel[i].drafts == serial[i].drafts);
      CHECK(serial[i].password == generate_password(seed, salts[i], policy));
    }
  }
}

TEST_CASE("salt generation reads only the injected source") {
  palpas::testing::SeededRandom base(6);
  palpas::testing::RecordingRandom rec(base);
  const auto a = generate_salt(rec);
  const auto b = generate_salt(rec);
  CHECK(a != b);
  REQUIRE(rec.calls().size() == 2);
  CHECK(rec.calls()[1] == std::vector<std::uint8_t>(b.view().begin(), b.view().end()));
  palpas::testing::FailingRandom dead;
  CHECK_THROWS_AS(generate_salt(dead), Error);
}
