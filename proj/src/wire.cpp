#include "palpas/wire.hpp"

#include <cctype>

namespace palpas {

using nlohmann::json;

WireResponse InProcessTransport::send(WireRequest request) {
  request.client_certificate_pem = certificate_;
  try {
    return handler_(request);
  } catch (const Error& e) {
    return error_response(e);
  }
}

WireResponse UnreachableTransport::send(WireRequest) {
  throw Error(ErrorKind::network, "service unreachable");
}

WireResponse CapturingTransport::send(WireRequest request) {
  auto copy = request;
  auto response = inner_->send(std::move(request));
  std::lock_guard lock(mutex_);
  exchanges_.push_back({std::move(copy), response});
  return response;
}

std::vector<Exchange> CapturingTransport::exchanges() const {
  std::lock_guard lock(mutex_);
  return exchanges_;
}

std::string percent_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (const unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%') {
      if (i + 2 >= text.size()) {
        throw Error(ErrorKind::protocol, "truncated percent escape");
      }
      const int hi = nibble(text[i + 1]);
      const int lo = nibble(text[i + 2]);
      if (hi < 0 || lo < 0) throw Error(ErrorKind::protocol, "bad percent escape");
      out += static_cast<char>(hi << 4 | lo);
      i += 2;
    } else if (text[i] == '+') {
      out += ' ';
    } else {
      out += text[i];
    }
  }
  return out;
}

ParsedTarget parse_target(std::string_view target) {
  ParsedTarget out;
  const auto q = target.find('?');
  auto path = target.substr(0, q);
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    const auto slash = path.find('/');
    out.segments.push_back(percent_decode(path.substr(0, slash)));
    path = slash == std::string_view::npos ? std::string_view{} : path.substr(slash);
  }
  if (q != std::string_view::npos) {
    auto query = target.substr(q + 1);
    while (!query.empty()) {
      const auto amp = query.find('&');
      const auto pair = query.substr(0, amp);
      const auto eq = pair.find('=');
      if (!pair.empty()) {
        out.query[percent_decode(pair.substr(0, eq))] =
            eq == std::string_view::npos ? std::string{} : percent_decode(pair.substr(eq + 1));
      }
      query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
    }
  }
  return out;
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::authentication: return 401;
    case ErrorKind::enrollment: return 403;
    case ErrorKind::not_found:
    case ErrorKind::no_account:
    case ErrorKind::policy_missing: return 404;
    case ErrorKind::account_exists:
    case ErrorKind::state: return 409;
    case ErrorKind::validation:
    case ErrorKind::unsatisfiable_policy: return 422;
    case ErrorKind::io:
    case ErrorKind::randomness_unavailable:
    case ErrorKind::corruption: return 500;
    default: return 400;
  }
}

WireResponse error_response(const Error& error) {
  return json_response({{"error", std::string(to_string(error.kind()))}, {"message", error.what()}},
                       http_status(error.kind()));
}

WireResponse json_response(const json& body, int status) {
  WireResponse r;
  r.status = status;
  r.headers["Content-Type"] = "application/json";
  r.body = body.dump();
  return r;
}

namespace {

ErrorKind kind_from_string(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(ErrorKind::randomness_unavailable); ++k) {
    if (to_string(static_cast<ErrorKind>(k)) == name) return static_cast<ErrorKind>(k);
  }
  return ErrorKind::protocol;
}

}  // namespace

void throw_wire_error(const WireResponse& response) {
  const auto doc = json::parse(response.body, nullptr, false);
  if (doc.is_object() && doc.contains("error") && doc["error"].is_string()) {
    throw Error(kind_from_string(doc["error"].get<std::string>()),
                doc.value("message", std::string("request failed")));
  }
  throw Error(ErrorKind::protocol, "unexpected HTTP status " + std::to_string(response.status));
}

json expect_json(const WireResponse& response) {
  if (response.status < 200 || response.status >= 300) throw_wire_error(response);
  auto doc = json::parse(response.body, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::protocol, "response body is not JSON");
  return doc;
}

json parse_json_body(const WireRequest& request) {
  auto doc = json::parse(request.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorKind::protocol, "request body must be a JSON object");
  }
  return doc;
}

}  // namespace palpas
