#include <doctest.h>

#include "palpas/error.hpp"
#include "palpas/net.hpp"
#include "palpas/sss.hpp"

using namespace palpas;

namespace {

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

struct TlsService {
  CertificateAuthority ca = CertificateAuthority::create("net test authority");
  PrivateKey server_key = PrivateKey::generate();
  SaltSyncService sss{ca, std::make_shared<MemoryJournal>()};
  HttpServer server{sss.handler(),
                    TlsServerConfig{ca.issue_server(server_key, {"localhost", "127.0.0.1"}),
                                    server_key.to_pem(), ca.certificate_pem()}};
  std::string url;

  TlsService() {
    server.bind("127.0.0.1", 0);
    server.start();
    url = server.base_url();
  }

  std::shared_ptr<Transport> transport(std::optional<std::string> cert = std::nullopt,
                                       std::optional<std::string> key = std::nullopt) const {
    return std::make_shared<HttpTransport>(url, TlsClientConfig{ca.certificate_pem(), cert, key});
  }
};

}  // namespace

TEST_CASE("mutual TLS carries the device identity end to end") {
  TlsService svc;
  CHECK(svc.url.rfind("https://127.0.0.1:", 0) == 0);

  const auto key = PrivateKey::generate();
  SssClient anonymous(svc.transport());
  const auto enrollment = anonymous.create_account(make_csr(key));
  SssClient device(svc.transport(enrollment.certificate_pem, key.to_pem()));

  const ServiceId id = ServiceId::from(Bytes(32, 0xAB));
  ProtectedUsername blob;
  blob.ciphertext = Bytes(16, 1);
  const auto handle = device.put_record(id, Salt::from(Bytes(32, 2)), blob);
  const auto records = device.get_records(id);
  REQUIRE(records.size() == 1);
  CHECK(records[0].handle == handle);

  CHECK(error_of([&] { anonymous.get_records(id); }) == ErrorKind::authentication);

  // Second device via token over the wire, then revoked by the first.
  const auto token = device.issue_token();
  const auto key_b = PrivateKey::generate();
  const auto b = anonymous.register_device(make_csr(key_b), token.value);
  SssClient device_b(svc.transport(b.certificate_pem, key_b.to_pem()));
  CHECK(device_b.get_records(id).size() == 1);
  device.revoke_device(b.fingerprint);
  CHECK(error_of([&] { device_b.get_records(id); }) == ErrorKind::authentication);
}

TEST_CASE("certificates from another issuer fail the handshake") {
  TlsService svc;
  const auto rogue = CertificateAuthority::create("rogue");
  const auto key = PrivateKey::generate();
  const auto forged = rogue.issue_client(make_csr(key)).certificate_pem;
  SssClient client(svc.transport(forged, key.to_pem()));
  CHECK(error_of([&] { client.get_records(ServiceId{}); }) == ErrorKind::network);
}

TEST_CASE("client refuses a server it cannot authenticate") {
  TlsService svc;
  const auto other = CertificateAuthority::create("other");
  SssClient client(std::make_shared<HttpTransport>(svc.url, TlsClientConfig{other.certificate_pem(), {}, {}}));
  CHECK(error_of([&] { client.create_account(make_csr(PrivateKey::generate())); }) == ErrorKind::network);
}

TEST_CASE("plain HTTP round trip and unreachable peers") {
  HttpServer server([](const WireRequest& r) {
    WireResponse out;
    out.headers["Content-Type"] = "text/plain";
    out.headers["X-Echo"] = r.method;
    out.body = r.target + "|" + r.body;
    return out;
  });
  server.bind("127.0.0.1", 0);
  server.start();
  HttpTransport t(server.base_url());
  WireRequest req;
  req.method = "POST";
  req.target = "/policies?url=https%3A%2F%2Fx.org";
  req.body = "<xml/>";
  const auto res = t.send(req);
  CHECK(res.status == 200);
  CHECK(res.body == "/policies?url=https%3A%2F%2Fx.org|<xml/>");
  CHECK(res.headers.at("X-Echo") == "POST");
  server.stop();

  CHECK(error_of([&] { HttpTransport("http://127.0.0.1:1").send(req); }) == ErrorKind::network);
  CHECK(error_of([&] { HttpTransport("ftp://x"); }) == ErrorKind::invalid_input);
  CHECK(error_of([] { UnreachableTransport().send({}); }) == ErrorKind::network);
}
