#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "palpas/crypto.hpp"
#include "palpas/pps.hpp"
#include "palpas/sss.hpp"
#include "palpas/vault.hpp"

namespace palpas {

// version(1) | seed(32) | link_key(32) | token(32), standard Base64.
struct TransferBundle {
  static constexpr std::uint8_t kFormatVersion = 0x01;
  static constexpr std::size_t kRawSize = 97;

  Seed seed;
  LinkKey link_key;
  Bytes token;

  Bytes raw() const;
  std::string encode() const;
  // Error(format) for bad Base64, length or version byte.
  static TransferBundle decode(std::string_view text);
};

struct Credential {
  std::string certificate_pem;
  std::string key_pem;
};

// Builds the transport to the SSS, authenticated when a credential is given.
using SssConnector = std::function<std::shared_ptr<Transport>(const std::optional<Credential>&)>;

struct AddResult {
  std::string handle;
  std::string password;
  std::uint64_t policy_version = 0;
};

struct LoginResult {
  std::string handle;
  std::string username;
  std::string password;
  ServiceId identifier;
};

struct ProposedUpdate {
  std::string handle;
  std::string username;
  std::string old_password;
  std::string new_password;
  std::uint64_t policy_version = 0;
  bool policy_changed = false;
};

class SyncClient {
 public:
  SyncClient(VaultFile vault, SssConnector sss, std::shared_ptr<Transport> pps,
             RandomSource& rng = system_random(), std::uint32_t kdf_iterations = kDefaultKdfIterations);

  // Error(state) when a vault already exists. Nothing is written unless the
  // SSS accepted the new account.
  Enrollment setup(std::string_view master_password);
  std::string export_bundle(std::string_view master_password);
  Enrollment import_bundle(std::string_view bundle_text, std::string_view master_password);

  // Error(account_exists) if the service already has a record and
  // allow_another is false; Error(policy_missing) if the PPS has no policy.
  AddResult add_password(std::string_view master_password, const std::string& url,
                         const std::string& username, bool allow_another = false);
  // Error(no_account) when the SSS holds no record for the service.
  std::vector<LoginResult> login(std::string_view master_password, const std::string& url);

  // Two-phase update. The new salt lives only in the vault until commit.
  ProposedUpdate propose_update(std::string_view master_password, const std::string& url,
                                const std::optional<std::string>& handle = std::nullopt);
  LoginResult commit_update(std::string_view master_password, const std::string& url,
                            const std::optional<std::string>& handle = std::nullopt);
  void abandon_update(std::string_view master_password, const std::string& url,
                      const std::optional<std::string>& handle = std::nullopt);

  void revoke(std::string_view master_password, const std::string& fingerprint, bool confirm_last = false);
  std::vector<DeviceInfo> devices(std::string_view master_password);
  std::string fingerprint(std::string_view master_password);

  const VaultFile& vault() const noexcept { return vault_; }

 private:
  SssClient sss_for(const VaultPayload& payload);
  CachedPolicy resolve_policy(const VaultPayload& payload, const std::string& url, bool& fetched);
  std::vector<PendingUpdate>::const_iterator find_pending(const VaultPayload& payload, const std::string& url,
                                                          const std::optional<std::string>& handle) const;
  Enrollment create_vault_after(std::string_view master_password, const Seed& seed, const LinkKey& link_key,
                                const std::function<Enrollment(const std::string& csr)>& enroll);

  VaultFile vault_;
  SssConnector sss_;
  PpsClient pps_;
  RandomSource& rng_;
  std::uint32_t kdf_iterations_;
};

}  // namespace palpas
