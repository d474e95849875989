#include "palpas/pki.hpp"

#include <openssl/bio.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <ctime>

#include "palpas/bytes.hpp"
#include "palpas/crypto.hpp"
#include "palpas/error.hpp"

namespace palpas {

void PkeyFree::operator()(EVP_PKEY* key) const noexcept { EVP_PKEY_free(key); }
void X509Free::operator()(X509* cert) const noexcept { X509_free(cert); }

namespace {

constexpr long kClientValiditySeconds = 5L * 365 * 24 * 3600;
constexpr long kAuthorityValiditySeconds = 10L * 365 * 24 * 3600;
constexpr long kBackdateSeconds = 300;

struct BioFree {
  void operator()(BIO* b) const noexcept { BIO_free(b); }
};
struct ReqFree {
  void operator()(X509_REQ* r) const noexcept { X509_REQ_free(r); }
};
struct StoreFree {
  void operator()(X509_STORE* s) const noexcept { X509_STORE_free(s); }
};
struct StoreCtxFree {
  void operator()(X509_STORE_CTX* s) const noexcept { X509_STORE_CTX_free(s); }
};
struct ExtFree {
  void operator()(X509_EXTENSION* e) const noexcept { X509_EXTENSION_free(e); }
};

using Bio = std::unique_ptr<BIO, BioFree>;
using Req = std::unique_ptr<X509_REQ, ReqFree>;

[[noreturn]] void fail(const char* what) {
  throw Error(ErrorKind::protocol, std::string("x509: ") + what);
}

Bio memory_bio(std::string_view data) {
  Bio bio(BIO_new_mem_buf(data.data(), static_cast<int>(data.size())));
  if (!bio) fail("BIO_new_mem_buf");
  return bio;
}

std::string drain(BIO* bio) {
  char* data = nullptr;
  const long len = BIO_get_mem_data(bio, &data);
  return std::string(data, static_cast<std::size_t>(len));
}

std::string key_fingerprint(EVP_PKEY* key) {
  unsigned char* der = nullptr;
  const int len = i2d_PUBKEY(key, &der);
  if (len <= 0) fail("i2d_PUBKEY");
  const auto digest = sha256(ByteView(der, static_cast<std::size_t>(len)));
  OPENSSL_free(der);
  return digest.hex();
}

void add_extension(X509* cert, X509* issuer, int nid, const char* value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
  std::unique_ptr<X509_EXTENSION, ExtFree> ext(X509V3_EXT_conf_nid(nullptr, &ctx, nid, value));
  if (!ext || X509_add_ext(cert, ext.get(), -1) != 1) fail("X509_add_ext");
}

void set_random_serial(X509* cert) {
  unsigned char raw[16];
  if (RAND_bytes(raw, sizeof raw) != 1) throw Error(ErrorKind::randomness_unavailable, "RAND_bytes");
  raw[0] &= 0x7F;
  BIGNUM* bn = BN_bin2bn(raw, sizeof raw, nullptr);
  if (bn == nullptr || BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert)) == nullptr) {
    BN_free(bn);
    fail("serial");
  }
  BN_free(bn);
}

std::unique_ptr<X509, X509Free> new_cert(EVP_PKEY* subject_key, long validity) {
  std::unique_ptr<X509, X509Free> cert(X509_new());
  if (!cert) fail("X509_new");
  X509_set_version(cert.get(), 2);
  set_random_serial(cert.get());
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), -kBackdateSeconds);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), validity);
  if (X509_set_pubkey(cert.get(), subject_key) != 1) fail("X509_set_pubkey");
  return cert;
}

void set_common_name(X509* cert, std::string_view cn) {
  X509_NAME* name = X509_get_subject_name(cert);
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8,
                             reinterpret_cast<const unsigned char*>(cn.data()),
                             static_cast<int>(cn.size()), -1, 0);
}

}  // namespace

PrivateKey PrivateKey::generate() {
  EVP_PKEY* key = EVP_EC_gen("P-256");
  if (key == nullptr) fail("EVP_EC_gen");
  return PrivateKey(key);
}

PrivateKey PrivateKey::from_pem(std::string_view pem) {
  auto bio = memory_bio(pem);
  EVP_PKEY* key = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
  if (key == nullptr) throw Error(ErrorKind::format, "unreadable private key");
  return PrivateKey(key);
}

std::string PrivateKey::to_pem() const {
  Bio bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PrivateKey(bio.get(), key_.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1) {
    fail("PEM_write_bio_PrivateKey");
  }
  return drain(bio.get());
}

std::string PrivateKey::fingerprint() const { return key_fingerprint(key_.get()); }

Certificate Certificate::from_pem(std::string_view pem) {
  auto bio = memory_bio(pem);
  X509* cert = PEM_read_bio_X509(bio.get(), nullptr, nullptr, nullptr);
  if (cert == nullptr) throw Error(ErrorKind::protocol, "unreadable certificate");
  return Certificate(cert);
}

Certificate Certificate::from_der(std::string_view der) {
  const auto* p = reinterpret_cast<const unsigned char*>(der.data());
  X509* cert = d2i_X509(nullptr, &p, static_cast<long>(der.size()));
  if (cert == nullptr) throw Error(ErrorKind::protocol, "unreadable certificate");
  return Certificate(cert);
}

std::string Certificate::to_pem() const {
  Bio bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_X509(bio.get(), cert_.get()) != 1) fail("PEM_write_bio_X509");
  return drain(bio.get());
}

std::string Certificate::fingerprint() const {
  EVP_PKEY* key = X509_get0_pubkey(cert_.get());
  if (key == nullptr) fail("certificate without public key");
  return key_fingerprint(key);
}

std::int64_t Certificate::not_after() const {
  struct tm tm {};
  if (ASN1_TIME_to_tm(X509_get0_notAfter(cert_.get()), &tm) != 1) fail("notAfter");
  return static_cast<std::int64_t>(timegm(&tm));
}

std::string make_csr(const PrivateKey& key, std::string_view common_name) {
  Req req(X509_REQ_new());
  if (!req) fail("X509_REQ_new");
  X509_REQ_set_version(req.get(), 0);
  if (!common_name.empty()) {
    X509_NAME_add_entry_by_txt(X509_REQ_get_subject_name(req.get()), "CN", MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(common_name.data()),
                               static_cast<int>(common_name.size()), -1, 0);
  }
  if (X509_REQ_set_pubkey(req.get(), key.get()) != 1) fail("X509_REQ_set_pubkey");
  if (X509_REQ_sign(req.get(), key.get(), EVP_sha256()) <= 0) fail("X509_REQ_sign");
  Bio bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_X509_REQ(bio.get(), req.get()) != 1) fail("PEM_write_bio_X509_REQ");
  return drain(bio.get());
}

CertificateAuthority CertificateAuthority::create(std::string_view name) {
  auto key = PrivateKey::generate();
  auto cert = new_cert(key.get(), kAuthorityValiditySeconds);
  set_common_name(cert.get(), name);
  X509_set_issuer_name(cert.get(), X509_get_subject_name(cert.get()));
  add_extension(cert.get(), cert.get(), NID_basic_constraints, "critical,CA:TRUE");
  add_extension(cert.get(), cert.get(), NID_key_usage, "critical,keyCertSign,cRLSign");
  add_extension(cert.get(), cert.get(), NID_subject_key_identifier, "hash");
  if (X509_sign(cert.get(), key.get(), EVP_sha256()) <= 0) fail("X509_sign");
  return CertificateAuthority(Certificate(cert.release()), key);
}

CertificateAuthority CertificateAuthority::load(std::string_view certificate_pem,
                                                std::string_view key_pem) {
  return CertificateAuthority(Certificate::from_pem(certificate_pem), PrivateKey::from_pem(key_pem));
}

IssuedCertificate CertificateAuthority::issue_client(std::string_view csr_pem) const {
  auto bio = memory_bio(csr_pem);
  Req req(PEM_read_bio_X509_REQ(bio.get(), nullptr, nullptr, nullptr));
  if (!req) throw Error(ErrorKind::protocol, "malformed certificate signing request");
  EVP_PKEY* pub = X509_REQ_get0_pubkey(req.get());
  if (pub == nullptr || X509_REQ_verify(req.get(), pub) != 1) {
    throw Error(ErrorKind::protocol, "certificate signing request signature is invalid");
  }
  if (X509_NAME_entry_count(X509_REQ_get_subject_name(req.get())) != 0) {
    throw Error(ErrorKind::validation, "certificate signing request must not carry subject fields");
  }
  if (X509_REQ_get_attr_count(req.get()) != 0) {
    throw Error(ErrorKind::validation, "certificate signing request must not carry attributes");
  }

  const auto fingerprint = key_fingerprint(pub);
  auto cert = new_cert(pub, kClientValiditySeconds);
  // The subject names the key, never the user.
  set_common_name(cert.get(), fingerprint);
  X509_set_issuer_name(cert.get(), X509_get_subject_name(cert_.get()));
  add_extension(cert.get(), cert_.get(), NID_basic_constraints, "critical,CA:FALSE");
  add_extension(cert.get(), cert_.get(), NID_key_usage, "critical,digitalSignature");
  add_extension(cert.get(), cert_.get(), NID_ext_key_usage, "clientAuth");
  add_extension(cert.get(), cert_.get(), NID_authority_key_identifier, "keyid:always");
  if (X509_sign(cert.get(), key_.get(), EVP_sha256()) <= 0) fail("X509_sign");
  return {Certificate(cert.release()).to_pem(), fingerprint};
}

std::string CertificateAuthority::issue_server(const PrivateKey& key,
                                               const std::vector<std::string>& hosts) const {
  auto cert = new_cert(key.get(), kClientValiditySeconds);
  set_common_name(cert.get(), hosts.empty() ? "localhost" : hosts.front());
  X509_set_issuer_name(cert.get(), X509_get_subject_name(cert_.get()));
  std::string san;
  for (const auto& host : hosts) {
    if (!san.empty()) san += ',';
    const bool is_ip = host.find_first_not_of("0123456789.") == std::string::npos ||
                       host.find(':') != std::string::npos;
    san += (is_ip ? "IP:" : "DNS:") + host;
  }
  if (!san.empty()) add_extension(cert.get(), cert_.get(), NID_subject_alt_name, san.c_str());
  add_extension(cert.get(), cert_.get(), NID_basic_constraints, "critical,CA:FALSE");
  add_extension(cert.get(), cert_.get(), NID_ext_key_usage, "serverAuth");
  if (X509_sign(cert.get(), key_.get(), EVP_sha256()) <= 0) fail("X509_sign");
  return Certificate(cert.release()).to_pem();
}

bool CertificateAuthority::verify(const Certificate& cert) const {
  std::unique_ptr<X509_STORE, StoreFree> store(X509_STORE_new());
  std::unique_ptr<X509_STORE_CTX, StoreCtxFree> ctx(X509_STORE_CTX_new());
  if (!store || !ctx) fail("X509_STORE_new");
  if (X509_STORE_add_cert(store.get(), cert_.get()) != 1) fail("X509_STORE_add_cert");
  if (X509_STORE_CTX_init(ctx.get(), store.get(), cert.get(), nullptr) != 1) fail("X509_STORE_CTX_init");
  X509_STORE_CTX_set_purpose(ctx.get(), X509_PURPOSE_SSL_CLIENT);
  return X509_verify_cert(ctx.get()) == 1;
}

}  // namespace palpas
