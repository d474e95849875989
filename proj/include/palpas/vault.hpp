#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "palpas/crypto.hpp"
#include "palpas/policy.hpp"

namespace palpas {

struct CachedPolicy {
  PasswordPolicy policy;
  std::uint64_t version = 0;

  friend bool operator==(const CachedPolicy&, const CachedPolicy&) = default;
};

// A proposed password change awaiting confirmation that the service
// accepted the new password.
struct PendingUpdate {
  std::string url;
  std::string handle;
  Salt new_salt;
  std::optional<CachedPolicy> policy;  // newer policy to adopt on commit

  friend bool operator==(const PendingUpdate&, const PendingUpdate&) = default;
};

struct VaultPayload {
  Seed seed;
  LinkKey link_key;
  std::string device_private_key_pem;
  std::string certificate_pem;
  std::string fingerprint;
  std::string account_id;
  std::map<std::string, CachedPolicy> cached_policies;  // keyed by service url
  std::vector<PendingUpdate> pending_updates;

  friend bool operator==(const VaultPayload&, const VaultPayload&) = default;
};

// On-disk layout, all integers big-endian:
//   "PALPAS" | u16 format_version | kdf_salt[16] | u32 iterations | iv[16]
//   | u32 ciphertext_len | ciphertext | mac[32]
// mac = HMAC-SHA-256(vault mac subkey, every preceding byte).
struct VaultEnvelope {
  static constexpr std::uint16_t kFormatVersion = 1;

  std::uint16_t format_version = kFormatVersion;
  KdfSalt kdf_salt;
  std::uint32_t iterations = 0;
  Iv iv;
  Bytes ciphertext;
  Digest mac;

  Bytes serialize() const;
  // Error(format) on structural problems (bad magic, truncation, version).
  static VaultEnvelope parse(ByteView bytes);
};

VaultEnvelope create_vault(std::string_view master_password, const VaultPayload& payload,
                           std::uint32_t iterations = kDefaultKdfIterations,
                           RandomSource& rng = system_random());

// Wrong password and tampering both raise the same Error(authentication).
VaultPayload open_vault(std::string_view master_password, const VaultEnvelope& envelope);

using VaultMutation = std::function<void(VaultPayload&)>;

// Re-seals with a fresh IV under the same KDF salt and work factor.
VaultEnvelope update_vault(std::string_view master_password, const VaultEnvelope& envelope,
                           const VaultMutation& mutation, RandomSource& rng = system_random());

// Re-seals under a new password with a fresh KDF salt.
VaultEnvelope change_master_password(std::string_view old_password, std::string_view new_password,
                                     const VaultEnvelope& envelope,
                                     RandomSource& rng = system_random());

// One vault file per device. Writes go to a sibling temp file that is
// fsynced and renamed over the target.
class VaultFile {
 public:
  explicit VaultFile(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const noexcept { return path_; }
  bool exists() const;

  VaultEnvelope read() const;
  void write(const VaultEnvelope& envelope) const;

  // Error(state) if a vault already exists at the path.
  void create(std::string_view master_password, const VaultPayload& payload,
              std::uint32_t iterations = kDefaultKdfIterations,
              RandomSource& rng = system_random()) const;
  VaultPayload open(std::string_view master_password) const;
  VaultPayload update(std::string_view master_password, const VaultMutation& mutation,
                      RandomSource& rng = system_random()) const;
  void change_master_password(std::string_view old_password, std::string_view new_password,
                              RandomSource& rng = system_random()) const;

  // Test seam: runs after the temp file is durable and before the rename.
  void set_before_rename(std::function<void()> hook) { before_rename_ = std::move(hook); }

 private:
  std::filesystem::path path_;
  std::function<void()> before_rename_;
};

void write_file_atomic(const std::filesystem::path& path, ByteView bytes,
                       const std::function<void()>& before_rename = {});
Bytes read_file(const std::filesystem::path& path);

}  // namespace palpas
