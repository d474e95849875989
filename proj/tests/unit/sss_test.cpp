#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include "palpas/error.hpp"
#include "palpas/sss.hpp"
#include "support.hpp"

using namespace palpas;
namespace fs = std::filesystem;

namespace {

const CertificateAuthority& authority() {
  static const auto ca = CertificateAuthority::create("sss test authority");
  return ca;
}

struct Fixture {
  std::int64_t now = 1'700'000'000;
  std::shared_ptr<MemoryJournal> journal = std::make_shared<MemoryJournal>();
  SaltSyncService service{authority(), journal, system_random(), [this] { return now; }};
};

struct Device {
  PrivateKey key = PrivateKey::generate();
  Enrollment enrollment;
  std::optional<std::string> peer() const { return enrollment.certificate_pem; }
};

Device new_account(SaltSyncService& sss) {
  Device d;
  d.enrollment = sss.create_account(make_csr(d.key));
  return d;
}

Device enroll(SaltSyncService& sss, const Device& existing) {
  Device d;
  const auto token = sss.issue_token(existing.peer());
  d.enrollment = sss.register_device(make_csr(d.key), token.value);
  return d;
}

template <class F>
ErrorKind error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::state;
}

ProtectedUsername blob(std::uint8_t fill) {
  ProtectedUsername p;
  p.ciphertext = Bytes(32, fill);
  p.mac = Digest::from(Bytes(32, static_cast<std::uint8_t>(fill + 1)));
  return p;
}

ServiceId some_id(std::uint8_t fill) { return ServiceId::from(Bytes(32, fill)); }
Salt some_salt(std::uint8_t fill) { return Salt::from(Bytes(32, fill)); }

}  // namespace

TEST_CASE("account creation issues a verifiable certificate") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto b = new_account(f.service);
  CHECK(a.enrollment.account_id != b.enrollment.account_id);
  CHECK(f.service.account_count() == 2);
  CHECK(authority().verify(Certificate::from_pem(a.enrollment.certificate_pem)));
  CHECK(a.enrollment.fingerprint == a.key.fingerprint());
  CHECK(f.service.list_devices(a.peer()).size() == 1);
  CHECK(error_of([&] { f.service.create_account(make_csr(PrivateKey::generate(), "Alice")); }) ==
        ErrorKind::validation);
  CHECK(error_of([&] { f.service.create_account("garbage"); }) == ErrorKind::protocol);
  CHECK(error_of([&] { f.service.create_account(make_csr(a.key)); }) == ErrorKind::state);
}

TEST_CASE("records: put, get, multiple accounts, replace, delete") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto id = some_id(1);
  CHECK(f.service.get_records(a.peer(), id).empty());

  const auto h1 = f.service.put_record(a.peer(), id, some_salt(1), blob(1));
  auto records = f.service.get_records(a.peer(), id);
  REQUIRE(records.size() == 1);
  CHECK(records[0] == SaltRecord{h1, some_salt(1), blob(1)});

  const auto h2 = f.service.put_record(a.peer(), id, some_salt(2), blob(2));
  CHECK(h1 != h2);
  CHECK(f.service.get_records(a.peer(), id).size() == 2);

  CHECK(f.service.put_record(a.peer(), id, some_salt(3), blob(1), h1) == h1);
  records = f.service.get_records(a.peer(), id);
  REQUIRE(records.size() == 2);
  CHECK(records[0].salt == some_salt(3));
  CHECK(records[1].salt == some_salt(2));
  // Replaying the same replacement is harmless.
  const auto journal_size = f.journal->entries().size();
  CHECK(f.service.put_record(a.peer(), id, some_salt(3), blob(1), h1) == h1);
  CHECK(f.journal->entries().size() == journal_size);

  CHECK(error_of([&] { f.service.put_record(a.peer(), id, some_salt(4), blob(4), "missing"); }) ==
        ErrorKind::not_found);

  f.service.delete_record(a.peer(), id, h2);
  records = f.service.get_records(a.peer(), id);
  REQUIRE(records.size() == 1);
  CHECK(records[0].handle == h1);
  CHECK(error_of([&] { f.service.delete_record(a.peer(), id, h2); }) == ErrorKind::not_found);
  CHECK(error_of([&] { f.service.delete_record(std::nullopt, id, h1); }) == ErrorKind::authentication);
}

TEST_CASE("accounts are isolated from each other") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto b = new_account(f.service);
  const auto h = f.service.put_record(a.peer(), some_id(9), some_salt(9), blob(9));
  CHECK(f.service.get_records(b.peer(), some_id(9)).empty());
  CHECK(error_of([&] { f.service.delete_record(b.peer(), some_id(9), h); }) == ErrorKind::not_found);
  CHECK(error_of([&] { f.service.revoke_device(b.peer(), a.enrollment.fingerprint); }) == ErrorKind::not_found);
}

TEST_CASE("unauthenticated and foreign certificates are refused") {
  Fixture f;
  const auto a = new_account(f.service);
  CHECK(error_of([&] { f.service.get_records(std::nullopt, some_id(1)); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.issue_token(std::string("nonsense")); }) == ErrorKind::authentication);
  const auto rogue_ca = CertificateAuthority::create("rogue");
  const auto forged = rogue_ca.issue_client(make_csr(a.key)).certificate_pem;
  CHECK(error_of([&] { f.service.get_records(forged, some_id(1)); }) == ErrorKind::authentication);
}

TEST_CASE("tokens are single use and expire") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto t1 = f.service.issue_token(a.peer());
  const auto t2 = f.service.issue_token(a.peer());
  CHECK(t1.value.size() == 32);
  CHECK(t1.value != t2.value);
  CHECK(t1.expires_at == f.now + 900);

  const auto b_key = PrivateKey::generate();
  const auto b = f.service.register_device(make_csr(b_key), t1.value);
  CHECK(b.account_id == a.enrollment.account_id);
  CHECK(error_of([&] { f.service.register_device(make_csr(PrivateKey::generate()), t1.value); }) ==
        ErrorKind::enrollment);

  f.now += kTokenLifetimeSeconds;
  CHECK(error_of([&] { f.service.register_device(make_csr(PrivateKey::generate()), t2.value); }) ==
        ErrorKind::enrollment);
  CHECK(error_of([&] { f.service.register_device(make_csr(PrivateKey::generate()), Bytes(32, 7)); }) ==
        ErrorKind::enrollment);
  CHECK(error_of([&] { f.service.register_device(make_csr(PrivateKey::generate()), Bytes(5, 7)); }) ==
        ErrorKind::enrollment);

  // Second device shares the account's records.
  const auto h = f.service.put_record(a.peer(), some_id(3), some_salt(3), blob(3));
  const auto records = f.service.get_records(b.certificate_pem, some_id(3));
  REQUIRE(records.size() == 1);
  CHECK(records[0].handle == h);
}

TEST_CASE("a token survives one enrollment under concurrent use") {
  Fixture f;
  const auto a = new_account(f.service);
  for (int round = 0; round < 5; ++round) {
    const auto token = f.service.issue_token(a.peer());
    std::vector<std::string> csrs;
    for (int i = 0; i < 8; ++i) csrs.push_back(make_csr(PrivateKey::generate()));
    std::atomic<int> ok{0}, refused{0};
    std::vector<std::thread> threads;
    for (const auto& csr : csrs) {
      threads.emplace_back([&, csr] {
        try {
          f.service.register_device(csr, token.value);
          ++ok;
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::enrollment) ++refused;
        }
      });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 1);
    CHECK(refused == 7);
  }
  CHECK(f.service.list_devices(a.peer()).size() == 6);
}

TEST_CASE("revocation is immediate, idempotent and guarded for the last key") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto b = enroll(f.service, a);
  const auto id = some_id(5);
  const auto h = f.service.put_record(b.peer(), id, some_salt(5), blob(5));

  f.service.revoke_device(a.peer(), b.enrollment.fingerprint);
  f.service.revoke_device(a.peer(), b.enrollment.fingerprint);
  CHECK(error_of([&] { f.service.get_records(b.peer(), id); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.get_records(b.peer(), some_id(77)); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.put_record(b.peer(), id, some_salt(6), blob(6)); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.put_record(b.peer(), id, some_salt(6), blob(6), h); }) ==
        ErrorKind::authentication);
  CHECK(error_of([&] { f.service.delete_record(b.peer(), id, h); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.issue_token(b.peer()); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.list_devices(b.peer()); }) == ErrorKind::authentication);
  CHECK(error_of([&] { f.service.revoke_device(b.peer(), a.enrollment.fingerprint); }) ==
        ErrorKind::authentication);

  const auto devices = f.service.list_devices(a.peer());
  REQUIRE(devices.size() == 2);
  CHECK_FALSE(devices[0].revoked);
  CHECK(devices[1].revoked);

  CHECK(error_of([&] { f.service.revoke_device(a.peer(), "00ff"); }) == ErrorKind::not_found);
  CHECK(error_of([&] { f.service.revoke_device(a.peer(), a.enrollment.fingerprint); }) == ErrorKind::state);
  f.service.revoke_device(a.peer(), a.enrollment.fingerprint, true);
  CHECK(error_of([&] { f.service.get_records(a.peer(), id); }) == ErrorKind::authentication);
}

TEST_CASE("state is rebuilt from the journal") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto b = enroll(f.service, a);
  const auto h = f.service.put_record(a.peer(), some_id(1), some_salt(1), blob(1));
  f.service.put_record(a.peer(), some_id(1), some_salt(2), blob(2), h);
  const auto h2 = f.service.put_record(a.peer(), some_id(2), some_salt(3), blob(3));
  f.service.delete_record(a.peer(), some_id(2), h2);
  const auto spare = f.service.issue_token(a.peer());
  const auto used = f.service.issue_token(a.peer());
  f.service.register_device(make_csr(PrivateKey::generate()), used.value);
  f.service.revoke_device(a.peer(), b.enrollment.fingerprint);

  SaltSyncService replayed(authority(), f.journal, system_random(), [&] { return f.now; });
  CHECK(replayed.account_count() == 1);
  CHECK(replayed.get_records(a.peer(), some_id(1)) == f.service.get_records(a.peer(), some_id(1)));
  CHECK(replayed.get_records(a.peer(), some_id(2)).empty());
  CHECK(error_of([&] { replayed.get_records(b.peer(), some_id(1)); }) == ErrorKind::authentication);
  CHECK(error_of([&] { replayed.register_device(make_csr(PrivateKey::generate()), used.value); }) ==
        ErrorKind::enrollment);
  CHECK_NOTHROW(replayed.register_device(make_csr(PrivateKey::generate()), spare.value));
}

TEST_CASE("journal holds token digests, never token values") {
  Fixture f;
  const auto a = new_account(f.service);
  const auto t = f.service.issue_token(a.peer());
  CHECK_FALSE(palpas::testing::contains(f.journal->raw(), to_hex(t.value)));
  CHECK(palpas::testing::contains(f.journal->raw(), sha256(t.value).hex()));
}

TEST_CASE("file journal appends durably and drops a torn tail") {
  const auto path = fs::temp_directory_path() / ("palpas-journal-" + std::to_string(::getpid()));
  fs::remove(path);
  {
    FileJournal j(path);
    j.append("{\"a\":1}");
    j.append("{\"b\":2}");
    CHECK_THROWS_AS(j.append("two\nlines"), Error);
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"torn";
  }
  {
    FileJournal j(path);
    CHECK(j.entries() == std::vector<std::string>{"{\"a\":1}", "{\"b\":2}"});
    j.append("{\"c\":3}");
    CHECK(j.entries() == std::vector<std::string>{"{\"a\":1}", "{\"b\":2}", "{\"c\":3}"});
  }
  fs::remove(path);
}

TEST_CASE("wire router speaks the same operations") {
  Fixture f;
  auto handler = f.service.handler();
  const auto key = PrivateKey::generate();
  SssClient anonymous(std::make_shared<InProcessTransport>(handler));
  const auto enrollment = anonymous.create_account(make_csr(key));
  SssClient client(std::make_shared<InProcessTransport>(handler, enrollment.certificate_pem));

  const auto id = some_id(4);
  const auto h = client.put_record(id, some_salt(4), blob(4));
  auto records = client.get_records(id);
  REQUIRE(records.size() == 1);
  CHECK(records[0] == SaltRecord{h, some_salt(4), blob(4)});
  CHECK(client.put_record(id, some_salt(5), blob(5), h) == h);
  CHECK(client.get_records(id)[0].salt == some_salt(5));

  const auto token = client.issue_token();
  const auto second = anonymous.register_device(make_csr(PrivateKey::generate()), token.value);
  CHECK(second.account_id == enrollment.account_id);
  CHECK(error_of([&] { anonymous.register_device(make_csr(PrivateKey::generate()), token.value); }) ==
        ErrorKind::enrollment);

  CHECK(client.list_devices().size() == 2);
  client.revoke_device(second.fingerprint);
  CHECK(client.list_devices()[1].revoked);
  client.delete_record(id, h);
  CHECK(client.get_records(id).empty());

  CHECK(error_of([&] { anonymous.get_records(id); }) == ErrorKind::authentication);
  CHECK(error_of([&] { anonymous.issue_token(); }) == ErrorKind::authentication);

  WireRequest bad;
  bad.method = "GET";
  bad.target = "/records/ABCD";
  CHECK(handler(bad).status == 400);
  bad.target = "/nowhere";
  CHECK(handler(bad).status == 404);
  bad.method = "PUT";
  bad.target = "/records/" + id.hex();
  bad.body = "{not json";
  bad.client_certificate_pem = enrollment.certificate_pem;
  CHECK(handler(bad).status == 400);
}

TEST_CASE("target parsing decodes segments and query") {
  const auto t = parse_target("/policies/https%3A%2F%2Fexample.org/3/ratings?url=a%20b&x=&y");
  CHECK(t.segments == std::vector<std::string>{"policies", "https://example.org", "3", "ratings"});
  CHECK(t.query.at("url") == "a b");
  CHECK(t.query.at("x").empty());
  CHECK(t.query.count("y") == 1);
  CHECK(percent_decode(percent_encode("https://ex.org/p?q=1&r=ä")) == "https://ex.org/p?q=1&r=ä");
  CHECK_THROWS_AS(percent_decode("%4"), Error);
  CHECK_THROWS_AS(percent_decode("%zz"), Error);
}
