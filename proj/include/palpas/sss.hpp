#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "palpas/crypto.hpp"
#include "palpas/journal.hpp"
#include "palpas/pki.hpp"
#include "palpas/random.hpp"
#include "palpas/wire.hpp"

namespace palpas {

inline constexpr std::int64_t kTokenLifetimeSeconds = 15 * 60;
inline constexpr std::size_t kTokenBytes = 32;

using Clock = std::function<std::int64_t()>;
std::int64_t unix_now();

struct Enrollment {
  std::string account_id;
  std::string certificate_pem;
  std::string fingerprint;
  std::string ca_certificate_pem;
};

struct IssuedToken {
  Bytes value;  // kTokenBytes
  std::int64_t expires_at = 0;
};

struct SaltRecord {
  std::string handle;  // server-assigned, stable across replacement
  Salt salt;
  ProtectedUsername username;

  friend bool operator==(const SaltRecord&, const SaltRecord&) = default;
};

struct DeviceInfo {
  std::string fingerprint;
  std::int64_t enrolled_at = 0;
  bool revoked = false;
};

nlohmann::json username_to_json(const ProtectedUsername& blob);
ProtectedUsername username_from_json(const nlohmann::json& j);

// Salt synchronization service. Devices authenticate with certificates the
// service itself issued; the peer certificate arrives from the transport.
// Every mutation is journaled before it is applied, and the journal holds
// only identifiers, salts, encrypted usernames, key fingerprints and token
// digests.
class SaltSyncService {
 public:
  SaltSyncService(CertificateAuthority ca, std::shared_ptr<Journal> journal,
                  RandomSource& rng = system_random(), Clock clock = unix_now);

  Enrollment create_account(std::string_view csr_pem);
  IssuedToken issue_token(const std::optional<std::string>& peer);
  // Error(enrollment) for unknown, expired or already used tokens.
  Enrollment register_device(std::string_view csr_pem, ByteView token);

  // Without replace_handle a new record is appended; with it the named
  // record gets the new salt and username and keeps its handle.
  std::string put_record(const std::optional<std::string>& peer, const ServiceId& id,
                         const Salt& salt, const ProtectedUsername& username,
                         const std::optional<std::string>& replace_handle = std::nullopt);
  std::vector<SaltRecord> get_records(const std::optional<std::string>& peer, const ServiceId& id);
  void delete_record(const std::optional<std::string>& peer, const ServiceId& id,
                     const std::string& handle);
  // Idempotent. Error(state) when it would leave the account without an
  // active key and confirm_last is false.
  void revoke_device(const std::optional<std::string>& peer, const std::string& fingerprint,
                     bool confirm_last = false);
  std::vector<DeviceInfo> list_devices(const std::optional<std::string>& peer);

  std::size_t account_count() const;
  Handler handler();

 private:
  struct Token {
    std::string account_id;
    std::int64_t expires_at = 0;
    bool consumed = false;
  };
  struct Account {
    std::vector<DeviceInfo> devices;
    std::map<std::string, std::vector<SaltRecord>> records;  // identifier hex
  };

  void apply(const nlohmann::json& event);
  void commit(const nlohmann::json& event);
  std::string authenticate(const std::optional<std::string>& peer) const;
  IssuedCertificate issue(std::string_view csr_pem) const;
  std::string random_hex(std::size_t n);
  WireResponse route(const WireRequest& request);

  CertificateAuthority ca_;
  std::shared_ptr<Journal> journal_;
  RandomSource& rng_;
  Clock clock_;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Account> accounts_;
  std::map<std::string, std::string> key_owner_;  // fingerprint -> account
  std::map<std::string, Token> tokens_;           // sha-256 of value, hex
};

// Typed client over any transport.
class SssClient {
 public:
  explicit SssClient(std::shared_ptr<Transport> transport) : transport_(std::move(transport)) {}

  Enrollment create_account(const std::string& csr_pem);
  IssuedToken issue_token();
  Enrollment register_device(const std::string& csr_pem, ByteView token);
  std::string put_record(const ServiceId& id, const Salt& salt, const ProtectedUsername& username,
                         const std::optional<std::string>& replace_handle = std::nullopt);
  std::vector<SaltRecord> get_records(const ServiceId& id);
  void delete_record(const ServiceId& id, const std::string& handle);
  void revoke_device(const std::string& fingerprint, bool confirm_last = false);
  std::vector<DeviceInfo> list_devices();

 private:
  nlohmann::json call(const std::string& method, const std::string& target,
                      const std::optional<nlohmann::json>& body = std::nullopt);
  std::shared_ptr<Transport> transport_;
};

}  // namespace palpas
