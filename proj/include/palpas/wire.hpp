#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "palpas/error.hpp"

namespace palpas {

struct WireRequest {
  std::string method;
  std::string target;  // path plus optional query, percent-encoded
  std::map<std::string, std::string> headers;
  std::string body;
  // Filled by the transport from the authenticated channel, never from a
  // header the peer controls.
  std::optional<std::string> client_certificate_pem;
};

struct WireResponse {
  int status = 200;
  std::map<std::string, std::string> headers;
  std::string body;
};

using Handler = std::function<WireResponse(const WireRequest&)>;

class Transport {
 public:
  virtual ~Transport() = default;
  // Error(network) when the peer cannot be reached.
  virtual WireResponse send(WireRequest request) = 0;
};

// Calls a handler directly; the configured certificate stands in for the
// one a TLS handshake would have authenticated.
class InProcessTransport final : public Transport {
 public:
  explicit InProcessTransport(Handler handler,
                              std::optional<std::string> client_certificate_pem = std::nullopt)
      : handler_(std::move(handler)), certificate_(std::move(client_certificate_pem)) {}

  WireResponse send(WireRequest request) override;

 private:
  Handler handler_;
  std::optional<std::string> certificate_;
};

class UnreachableTransport final : public Transport {
 public:
  WireResponse send(WireRequest request) override;
};

struct Exchange {
  WireRequest request;
  WireResponse response;
};

// Records every exchange passing through; used to audit what leaves a device.
class CapturingTransport final : public Transport {
 public:
  explicit CapturingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

  WireResponse send(WireRequest request) override;
  std::vector<Exchange> exchanges() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mutex_;
  std::vector<Exchange> exchanges_;
};

// Target parsing shared by every server-side router.
struct ParsedTarget {
  std::vector<std::string> segments;  // percent-decoded
  std::map<std::string, std::string> query;
};

ParsedTarget parse_target(std::string_view target);
std::string percent_encode(std::string_view text);
std::string percent_decode(std::string_view text);

int http_status(ErrorKind kind);
WireResponse error_response(const Error& error);
WireResponse json_response(const nlohmann::json& body, int status = 200);

// Rebuilds the server's Error from a non-2xx response.
[[noreturn]] void throw_wire_error(const WireResponse& response);
nlohmann::json expect_json(const WireResponse& response);
nlohmann::json parse_json_body(const WireRequest& request);

}  // namespace palpas
