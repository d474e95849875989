#include "palpas/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <memory>

#include "palpas/error.hpp"

namespace palpas {

namespace {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

[[noreturn]] void openssl_failure(const char* what) {
  throw Error(ErrorKind::io, std::string("openssl: ") + what);
}

CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  return ctx;
}

Bytes aes256_cbc(bool encrypt, ByteView key, ByteView iv, ByteView input, bool padding) {
  if (key.size() != 32) throw Error(ErrorKind::invalid_input, "AES-256 requires a 32-byte key");
  auto ctx = new_cipher_ctx();
  if (EVP_CipherInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, key.data(), iv.data(),
                        encrypt ? 1 : 0) != 1) {
    openssl_failure("EVP_CipherInit_ex");
  }
  EVP_CIPHER_CTX_set_padding(ctx.get(), padding ? 1 : 0);
  Bytes out(input.size() + 16);
  int len = 0;
  if (EVP_CipherUpdate(ctx.get(), out.data(), &len, input.data(),
                       static_cast<int>(input.size())) != 1) {
    openssl_failure("EVP_CipherUpdate");
  }
  int tail = 0;
  if (EVP_CipherFinal_ex(ctx.get(), out.data() + len, &tail) != 1) {
    if (!encrypt) throw Error(ErrorKind::corruption, "invalid block padding");
    openssl_failure("EVP_CipherFinal_ex");
  }
  out.resize(static_cast<std::size_t>(len + tail));
  return out;
}

void increment_be(std::array<std::uint8_t, 32>& counter) {
  for (auto it = counter.rbegin(); it != counter.rend(); ++it) {
    if (++*it != 0) return;
  }
}

}  // namespace

Digest sha256(ByteView data) {
  std::array<std::uint8_t, 32> out{};
  SHA256(data.data(), data.size(), out.data());
  return Digest(out);
}

Digest hmac_sha256(ByteView key, ByteView data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           out.data(), &len) == nullptr ||
      len != out.size()) {
    openssl_failure("HMAC");
  }
  return Digest(out);
}

Bytes aes256_cbc_encrypt(ByteView key, const Iv& iv, ByteView plaintext) {
  return aes256_cbc(true, key, iv.view(), plaintext, true);
}

Bytes aes256_cbc_decrypt(ByteView key, const Iv& iv, ByteView ciphertext) {
  if (ciphertext.empty() || ciphertext.size() % 16 != 0) {
    throw Error(ErrorKind::corruption, "ciphertext is not a whole number of blocks");
  }
  return aes256_cbc(false, key, iv.view(), ciphertext, true);
}

SubKeys derive_subkeys(ByteView key, std::string_view enc_label, std::string_view mac_label) {
  return {hmac_sha256(key, as_bytes(enc_label)), hmac_sha256(key, as_bytes(mac_label))};
}

Seed generate_seed(RandomSource& rng) {
  Seed seed;
  rng.fill(seed.mutable_view());
  return seed;
}

LinkKey generate_link_key(RandomSource& rng) {
  LinkKey key;
  rng.fill(key.mutable_view());
  return key;
}

MasterKey derive_master_key(std::string_view master_password, const KdfSalt& kdf_salt,
                            std::uint32_t iterations) {
  if (master_password.empty()) throw Error(ErrorKind::invalid_input, "master password is empty");
  if (iterations == 0) throw Error(ErrorKind::invalid_input, "iteration count must be positive");
  return {pbkdf2_sha256(master_password, kdf_salt.view(), iterations), kdf_salt, iterations};
}

Digest pbkdf2_sha256(std::string_view password, ByteView salt, std::uint32_t iterations) {
  std::array<std::uint8_t, 32> out{};
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                        static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                        static_cast<int>(out.size()), out.data()) != 1) {
    openssl_failure("PKCS5_PBKDF2_HMAC");
  }
  return Digest(out);
}

ServiceId compute_identifier(const LinkKey& key, std::string_view url) {
  if (url.empty()) throw Error(ErrorKind::invalid_input, "service url is empty");
  Bytes input(key.view().begin(), key.view().end());
  input.insert(input.end(), url.begin(), url.end());
  return ServiceId(sha256(input).array());
}

SubKeys derive_link_subkeys(const LinkKey& key) {
  return derive_subkeys(key.view(), "palpas/enc", "palpas/mac");
}

ProtectedUsername encrypt_username(const LinkKey& key, std::string_view username,
                                   RandomSource& rng) {
  Iv iv;
  rng.fill(iv.mutable_view());
  return encrypt_username_with_iv(key, username, iv);
}

ProtectedUsername encrypt_username_with_iv(const LinkKey& key, std::string_view username,
                                           const Iv& iv) {
  if (username.empty()) throw Error(ErrorKind::invalid_input, "username is empty");
  const auto sub = derive_link_subkeys(key);
  ProtectedUsername out;
  out.iv = iv;
  out.ciphertext = aes256_cbc_encrypt(sub.enc_key.view(), iv, as_bytes(username));
  Bytes authenticated(iv.view().begin(), iv.view().end());
  authenticated.insert(authenticated.end(), out.ciphertext.begin(), out.ciphertext.end());
  out.mac = hmac_sha256(sub.mac_key.view(), authenticated);
  return out;
}

std::string decrypt_username(const LinkKey& key, const ProtectedUsername& blob) {
  const auto sub = derive_link_subkeys(key);
  Bytes authenticated(blob.iv.view().begin(), blob.iv.view().end());
  authenticated.insert(authenticated.end(), blob.ciphertext.begin(), blob.ciphertext.end());
  const auto expected = hmac_sha256(sub.mac_key.view(), authenticated);
  if (!constant_time_equal(expected.view(), blob.mac.view())) {
    throw Error(ErrorKind::authentication, "username record failed authentication");
  }
  const auto plain = aes256_cbc_decrypt(sub.enc_key.view(), blob.iv, blob.ciphertext);
  std::string text(plain.begin(), plain.end());
  std::u32string ignored;
  if (text.empty() || !utf8_try_decode(text, ignored)) {
    throw Error(ErrorKind::corruption, "username record is not valid UTF-8");
  }
  return text;
}

Keystream::Keystream(const Seed& seed, const Salt& salt) : seed_(seed), counter_(salt.array()) {}

void Keystream::extend_to(std::size_t n_bytes) {
  if (stream_.size() >= n_bytes) return;
  const std::array<std::uint8_t, 16> zero_iv{};
  auto ctx = new_cipher_ctx();
  while (stream_.size() < n_bytes) {
    // Each block is a fresh two-AES-block CBC encryption from the zero IV.
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, seed_.view().data(),
                           zero_iv.data()) != 1) {
      openssl_failure("EVP_EncryptInit_ex");
    }
    EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
    const std::size_t at = stream_.size();
    stream_.resize(at + kBlockBytes);
    int len = 0;
    if (EVP_EncryptUpdate(ctx.get(), stream_.data() + at, &len, counter_.data(),
                          static_cast<int>(counter_.size())) != 1 ||
        len != static_cast<int>(kBlockBytes)) {
      openssl_failure("EVP_EncryptUpdate");
    }
    increment_be(counter_);
  }
}

ByteView Keystream::prefix(std::size_t n_bytes) {
  extend_to(n_bytes);
  return ByteView(stream_).first(n_bytes);
}

BitString Keystream::bits(std::size_t offset, std::size_t count) {
  extend_to((offset + count + 7) / 8);
  BitString out;
  out.n_bits = count;
  out.bytes.assign((count + 7) / 8, 0);
  const std::size_t shift = offset % 8;
  const std::size_t first = offset / 8;
  for (std::size_t i = 0; i < out.bytes.size(); ++i) {
    unsigned v = static_cast<unsigned>(stream_[first + i]) << shift;
    if (shift != 0 && first + i + 1 < stream_.size()) v |= stream_[first + i + 1] >> (8 - shift);
    out.bytes[i] = static_cast<std::uint8_t>(v);
  }
  if (const std::size_t spare = out.bytes.size() * 8 - count; spare != 0) {
    out.bytes.back() &= static_cast<std::uint8_t>(0xFF << spare);
  }
  return out;
}

BitString prg_generate(const Seed& seed, const Salt& salt, std::size_t n_bits) {
  if (n_bits == 0) throw Error(ErrorKind::invalid_input, "n_bits must be at least 1");
  Keystream stream(seed, salt);
  return stream.bits(0, n_bits);
}

}  // namespace palpas
