#include "palpas/net.hpp"

#include <openssl/pem.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

#include <httplib.h>

#include <thread>

#include "palpas/error.hpp"
#include "palpas/pki.hpp"

namespace palpas {

namespace {

X509_STORE* store_from_pem(const std::string& pem) {
  auto cert = Certificate::from_pem(pem);
  X509_STORE* store = X509_STORE_new();
  if (store == nullptr || X509_STORE_add_cert(store, cert.get()) != 1) {
    X509_STORE_free(store);
    throw Error(ErrorKind::protocol, "cannot build trust store");
  }
  return store;
}

struct Endpoint {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string prefix;
};

Endpoint parse_base_url(const std::string& url) {
  Endpoint e;
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw Error(ErrorKind::invalid_input, "service address needs a scheme: " + url);
  e.scheme = url.substr(0, sep);
  if (e.scheme != "http" && e.scheme != "https") {
    throw Error(ErrorKind::invalid_input, "unsupported scheme " + e.scheme);
  }
  auto rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    e.prefix = rest.substr(slash);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.rfind(':');
  if (colon != std::string::npos) {
    e.host = rest.substr(0, colon);
    try {
      e.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_input, "bad port in " + url);
    }
  } else {
    e.host = rest;
    e.port = e.scheme == "https" ? 443 : 80;
  }
  if (e.host.empty()) throw Error(ErrorKind::invalid_input, "service address has no host: " + url);
  return e;
}

std::optional<std::string> peer_certificate(const httplib::Request& req) {
  if (req.ssl == nullptr) return std::nullopt;
  X509* cert = SSL_get1_peer_certificate(req.ssl);
  if (cert == nullptr) return std::nullopt;
  if (SSL_get_verify_result(req.ssl) != X509_V_OK) {
    X509_free(cert);
    return std::nullopt;
  }
  BIO* bio = BIO_new(BIO_s_mem());
  std::optional<std::string> out;
  if (bio != nullptr && PEM_write_bio_X509(bio, cert) == 1) {
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    out.emplace(data, static_cast<std::size_t>(len));
  }
  BIO_free(bio);
  X509_free(cert);
  return out;
}

}  // namespace

struct HttpTransport::Impl {
  Endpoint endpoint;
  std::unique_ptr<httplib::ClientImpl> client;
};

HttpTransport::HttpTransport(std::string base_url, std::optional<TlsClientConfig> tls)
    : impl_(std::make_unique<Impl>()) {
  impl_->endpoint = parse_base_url(base_url);
  const auto& e = impl_->endpoint;
  if (e.scheme == "https") {
    if (!tls) throw Error(ErrorKind::invalid_input, "https service needs a CA certificate");
    std::unique_ptr<httplib::SSLClient> client;
    if (tls->certificate_pem && tls->key_pem) {
      const auto cert = Certificate::from_pem(*tls->certificate_pem);
      const auto key = PrivateKey::from_pem(*tls->key_pem);
      client = std::make_unique<httplib::SSLClient>(e.host, e.port, cert.get(), key.get());
    } else {
      client = std::make_unique<httplib::SSLClient>(e.host, e.port);
    }
    if (!client->is_valid()) throw Error(ErrorKind::protocol, "cannot initialise TLS client");
    client->set_ca_cert_store(store_from_pem(tls->ca_certificate_pem));
    client->enable_server_certificate_verification(true);
    impl_->client = std::move(client);
  } else {
    impl_->client = std::make_unique<httplib::ClientImpl>(e.host, e.port);
  }
  impl_->client->set_url_encode(false);
  impl_->client->set_connection_timeout(5, 0);
  impl_->client->set_read_timeout(30, 0);
}

HttpTransport::~HttpTransport() = default;

WireResponse HttpTransport::send(WireRequest request) {
  httplib::Request req;
  req.method = request.method;
  req.path = impl_->endpoint.prefix + request.target;
  for (const auto& [k, v] : request.headers) req.set_header(k, v);
  req.body = std::move(request.body);
  if (!req.body.empty() && !req.has_header("Content-Type")) req.set_header("Content-Type", "application/octet-stream");
  auto result = impl_->client->send(req);
  if (!result) {
    throw Error(ErrorKind::network, "cannot reach " + impl_->endpoint.host + ":" +
                                        std::to_string(impl_->endpoint.port) + " (" +
                                        httplib::to_string(result.error()) + ")");
  }
  WireResponse out;
  out.status = result->status;
  for (const auto& [k, v] : result->headers) out.headers[k] = v;
  out.body = std::move(result->body);
  return out;
}

struct HttpServer::Impl {
  std::unique_ptr<httplib::Server> server;
  std::string host;
  int port = 0;
  bool tls = false;
  std::thread thread;
};

HttpServer::HttpServer(Handler handler, std::optional<TlsServerConfig> tls) : impl_(std::make_unique<Impl>()) {
  if (tls) {
    const auto cert = Certificate::from_pem(tls->certificate_pem);
    const auto key = PrivateKey::from_pem(tls->key_pem);
    X509_STORE* store = store_from_pem(tls->client_ca_pem);
    auto server = std::make_unique<httplib::SSLServer>([&](SSL_CTX& ctx) {
      SSL_CTX_set_min_proto_version(&ctx, TLS1_2_VERSION);
      if (SSL_CTX_use_certificate(&ctx, cert.get()) != 1 || SSL_CTX_use_PrivateKey(&ctx, key.get()) != 1) {
        X509_STORE_free(store);
        return false;
      }
      SSL_CTX_set_cert_store(&ctx, store);
      // Enrollment endpoints are reached before a device has a certificate.
      SSL_CTX_set_verify(&ctx, SSL_VERIFY_PEER, nullptr);
      return true;
    });
    if (!server->is_valid()) throw Error(ErrorKind::protocol, "cannot initialise TLS server");
    impl_->server = std::move(server);
    impl_->tls = true;
  } else {
    impl_->server = std::make_unique<httplib::Server>();
  }

  auto dispatch = [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
    WireRequest request;
    request.method = req.method;
    request.target = req.target;
    for (const auto& [k, v] : req.headers) request.headers[k] = v;
    request.body = req.body;
    request.client_certificate_pem = peer_certificate(req);
    WireResponse response;
    try {
      response = handler(request);
    } catch (const Error& e) {
      response = error_response(e);
    }
    res.status = response.status;
    std::string content_type = "application/json";
    for (const auto& [k, v] : response.headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        res.set_header(k, v);
      }
    }
    res.set_content(response.body, content_type);
  };
  impl_->server->Get(".*", dispatch);
  impl_->server->Post(".*", dispatch);
  impl_->server->Put(".*", dispatch);
  impl_->server->Delete(".*", dispatch);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server->bind_to_any_port(host);
  } else {
    impl_->port = impl_->server->bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw Error(ErrorKind::network, "cannot listen on " + host + ":" + std::to_string(port));
  return impl_->port;
}

void HttpServer::run() { impl_->server->listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { run(); });
  impl_->server->wait_until_ready();
}

void HttpServer::stop() {
  if (impl_->server) impl_->server->stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string HttpServer::base_url() const {
  return std::string(impl_->tls ? "https" : "http") + "://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace palpas
