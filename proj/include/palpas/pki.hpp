#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

using EVP_PKEY = struct evp_pkey_st;
using X509 = struct x509_st;

namespace palpas {

struct PkeyFree {
  void operator()(EVP_PKEY* key) const noexcept;
};
struct X509Free {
  void operator()(X509* cert) const noexcept;
};

// EC P-256 key pair.
class PrivateKey {
 public:
  static PrivateKey generate();
  static PrivateKey from_pem(std::string_view pem);

  std::string to_pem() const;
  // SHA-256 over the DER SubjectPublicKeyInfo, lowercase hex.
  std::string fingerprint() const;
  EVP_PKEY* get() const noexcept { return key_.get(); }

 private:
  explicit PrivateKey(EVP_PKEY* key) : key_(key, PkeyFree{}) {}
  std::shared_ptr<EVP_PKEY> key_;
};

class Certificate {
 public:
  static Certificate from_pem(std::string_view pem);
  static Certificate from_der(std::string_view der);

  std::string to_pem() const;
  std::string fingerprint() const;  // of the certified public key
  std::int64_t not_after() const;
  X509* get() const noexcept { return cert_.get(); }

 private:
  friend class CertificateAuthority;
  explicit Certificate(X509* cert) : cert_(cert, X509Free{}) {}
  std::shared_ptr<X509> cert_;
};

// Subject-less PKCS#10 request; the optional common name exists only to let
// tests construct requests the issuer must refuse.
std::string make_csr(const PrivateKey& key, std::string_view common_name = {});

struct IssuedCertificate {
  std::string certificate_pem;
  std::string fingerprint;
};

class CertificateAuthority {
 public:
  static CertificateAuthority create(std::string_view name);
  static CertificateAuthority load(std::string_view certificate_pem, std::string_view key_pem);

  // Verifies the request signature and that it carries no subject fields.
  // Error(protocol) for unparsable requests, Error(validation) for
  // identity fields.
  IssuedCertificate issue_client(std::string_view csr_pem) const;
  std::string issue_server(const PrivateKey& key, const std::vector<std::string>& hosts) const;

  // Signature chain and validity period against this issuer.
  bool verify(const Certificate& cert) const;

  const Certificate& certificate() const noexcept { return cert_; }
  std::string certificate_pem() const { return cert_.to_pem(); }
  std::string key_pem() const { return key_.to_pem(); }

 private:
  CertificateAuthority(Certificate cert, PrivateKey key)
      : cert_(std::move(cert)), key_(std::move(key)) {}

  Certificate cert_;
  PrivateKey key_;
};

}  // namespace palpas
