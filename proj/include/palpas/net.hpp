#pragma once

#include <memory>
#include <optional>
#include <string>

#include "palpas/wire.hpp"

namespace palpas {

struct TlsClientConfig {
  std::string ca_certificate_pem;  // trust anchor for the server
  std::optional<std::string> certificate_pem;
  std::optional<std::string> key_pem;
};

// HTTP or HTTPS transport chosen by the scheme of base_url. HTTPS requires
// a TLS configuration; the client certificate, when given, is presented
// during the handshake.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::optional<TlsClientConfig> tls = std::nullopt);
  ~HttpTransport() override;

  WireResponse send(WireRequest request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct TlsServerConfig {
  std::string certificate_pem;
  std::string key_pem;
  std::string client_ca_pem;  // client certificates are requested, not required
};

class HttpServer {
 public:
  HttpServer(Handler handler, std::optional<TlsServerConfig> tls = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void run();    // blocks until stop()
  void start();  // runs on a background thread
  void stop();
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace palpas
