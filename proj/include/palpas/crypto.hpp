#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "palpas/bytes.hpp"
#include "palpas/random.hpp"

namespace palpas {

using Seed = FixedBytes<32, struct SeedTag>;
using LinkKey = FixedBytes<32, struct LinkKeyTag>;
using Salt = FixedBytes<32, struct SaltTag>;
using ServiceId = FixedBytes<32, struct ServiceIdTag>;
using KdfSalt = FixedBytes<16, struct KdfSaltTag>;
using Iv = FixedBytes<16, struct IvTag>;
using Digest = FixedBytes<32, struct DigestTag>;

inline constexpr std::uint32_t kDefaultKdfIterations = 600'000;

struct MasterKey {
  Digest key;
  KdfSalt kdf_salt;
  std::uint32_t iterations = 0;
};

struct SubKeys {
  Digest enc_key;
  Digest mac_key;
};

// Encrypt-then-MAC record: mac = HMAC-SHA-256(mac_key, iv || ciphertext).
struct ProtectedUsername {
  Iv iv;
  Bytes ciphertext;
  Digest mac;

  friend bool operator==(const ProtectedUsername&, const ProtectedUsername&) = default;
};

// Bit string of n_bits bits stored MSB-first; spare low bits of the last
// byte are zero.
struct BitString {
  Bytes bytes;
  std::size_t n_bits = 0;

  friend bool operator==(const BitString&, const BitString&) = default;
};

Seed generate_seed(RandomSource& rng = system_random());
LinkKey generate_link_key(RandomSource& rng = system_random());

// PBKDF2-HMAC-SHA-256 with a 32-byte output.
MasterKey derive_master_key(std::string_view master_password, const KdfSalt& kdf_salt,
                            std::uint32_t iterations);

// SHA-256(link_key || url).
ServiceId compute_identifier(const LinkKey& key, std::string_view url);

SubKeys derive_link_subkeys(const LinkKey& key);

ProtectedUsername encrypt_username(const LinkKey& key, std::string_view username,
                                   RandomSource& rng = system_random());
ProtectedUsername encrypt_username_with_iv(const LinkKey& key, std::string_view username,
                                           const Iv& iv);
// Error(authentication) on tag mismatch; Error(corruption) when the tag is
// valid but the padding or UTF-8 is not.
std::string decrypt_username(const LinkKey& key, const ProtectedUsername& blob);

// Counter-mode style keystream: block i is AES-256-CBC(key = seed, iv = 0)
// of the 32-byte big-endian value (salt + i) mod 2^256.
class Keystream {
 public:
  static constexpr std::size_t kBlockBytes = 32;

  Keystream(const Seed& seed, const Salt& salt);

  // Bytes [0, n) of the stream, generating blocks as needed.
  ByteView prefix(std::size_t n_bytes);
  // Bits [offset, offset + count), MSB-first.
  BitString bits(std::size_t offset, std::size_t count);

 private:
  void extend_to(std::size_t n_bytes);

  Seed seed_;
  std::array<std::uint8_t, 32> counter_;
  Bytes stream_;
};

BitString prg_generate(const Seed& seed, const Salt& salt, std::size_t n_bits);

Digest pbkdf2_sha256(std::string_view password, ByteView salt, std::uint32_t iterations);

// Primitive wrappers shared by the vault and PKI code.
Digest sha256(ByteView data);
Digest hmac_sha256(ByteView key, ByteView data);
Bytes aes256_cbc_encrypt(ByteView key, const Iv& iv, ByteView plaintext);
// Throws Error(corruption) on bad padding.
Bytes aes256_cbc_decrypt(ByteView key, const Iv& iv, ByteView ciphertext);
SubKeys derive_subkeys(ByteView key, std::string_view enc_label, std::string_view mac_label);

}  // namespace palpas
