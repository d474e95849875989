#include "palpas/vault.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "palpas/error.hpp"

namespace palpas {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "PALPAS";
constexpr int kPayloadFormat = 1;

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

class Reader {
 public:
  explicit Reader(ByteView bytes) : bytes_(bytes) {}

  ByteView take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::format, "vault file is truncated");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>(b[0] << 8 | b[1]);
  }
  std::uint32_t u32() {
    auto b = take(4);
    return std::uint32_t{b[0]} << 24 | std::uint32_t{b[1]} << 16 | std::uint32_t{b[2]} << 8 | b[3];
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  ByteView bytes_;
  std::size_t pos_ = 0;
};

Bytes authenticated_prefix(const VaultEnvelope& env) {
  Bytes out(kMagic.begin(), kMagic.end());
  put_u16(out, env.format_version);
  out.insert(out.end(), env.kdf_salt.view().begin(), env.kdf_salt.view().end());
  put_u32(out, env.iterations);
  out.insert(out.end(), env.iv.view().begin(), env.iv.view().end());
  put_u32(out, static_cast<std::uint32_t>(env.ciphertext.size()));
  out.insert(out.end(), env.ciphertext.begin(), env.ciphertext.end());
  return out;
}

SubKeys vault_keys(const MasterKey& key) {
  return derive_subkeys(key.key.view(), "palpas/vault/enc", "palpas/vault/mac");
}

json policy_to_json(const CachedPolicy& cached) {
  return {{"version", cached.version}, {"policy", serialize_policy(cached.policy)}};
}

CachedPolicy policy_from_json(const json& j) {
  CachedPolicy cached{parse_policy(j.at("policy").get<std::string>()), j.at("version").get<std::uint64_t>()};
  cached.policy.version = cached.version;
  return cached;
}

std::string encode_payload(const VaultPayload& p) {
  json policies = json::object();
  for (const auto& [url, cached] : p.cached_policies) policies[url] = policy_to_json(cached);
  json pending = json::array();
  for (const auto& u : p.pending_updates) {
    json entry = {{"url", u.url}, {"handle", u.handle}, {"new_salt", u.new_salt.hex()}};
    if (u.policy) entry["policy"] = policy_to_json(*u.policy);
    pending.push_back(std::move(entry));
  }
  const json doc = {
      {"format", kPayloadFormat},
      {"seed", p.seed.hex()},
      {"link_key", p.link_key.hex()},
      {"device_private_key", p.device_private_key_pem},
      {"certificate", p.certificate_pem},
      {"fingerprint", p.fingerprint},
      {"account_id", p.account_id},
      {"cached_policies", std::move(policies)},
      {"pending_updates", std::move(pending)},
  };
  return doc.dump();
}

VaultPayload decode_payload(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    if (doc.at("format").get<int>() != kPayloadFormat) {
      throw Error(ErrorKind::format, "unsupported vault payload format");
    }
    VaultPayload p;
    p.seed = Seed::from_hex(doc.at("seed").get<std::string>());
    p.link_key = LinkKey::from_hex(doc.at("link_key").get<std::string>());
    p.device_private_key_pem = doc.at("device_private_key").get<std::string>();
    p.certificate_pem = doc.at("certificate").get<std::string>();
    p.fingerprint = doc.at("fingerprint").get<std::string>();
    p.account_id = doc.at("account_id").get<std::string>();
    for (const auto& [url, cached] : doc.at("cached_policies").items()) {
      p.cached_policies.emplace(url, policy_from_json(cached));
    }
    for (const auto& entry : doc.at("pending_updates")) {
      PendingUpdate u;
      u.url = entry.at("url").get<std::string>();
      u.handle = entry.at("handle").get<std::string>();
      u.new_salt = Salt::from_hex(entry.at("new_salt").get<std::string>());
      if (entry.contains("policy")) u.policy = policy_from_json(entry.at("policy"));
      p.pending_updates.push_back(std::move(u));
    }
    return p;
  } catch (const json::exception&) {
    throw Error(ErrorKind::corruption, "vault payload is not readable");
  }
}

VaultEnvelope seal(const MasterKey& key, const VaultPayload& payload, RandomSource& rng) {
  VaultEnvelope env;
  env.kdf_salt = key.kdf_salt;
  env.iterations = key.iterations;
  rng.fill(env.iv.mutable_view());
  const auto sub = vault_keys(key);
  env.ciphertext = aes256_cbc_encrypt(sub.enc_key.view(), env.iv, as_bytes(encode_payload(payload)));
  env.mac = hmac_sha256(sub.mac_key.view(), authenticated_prefix(env));
  return env;
}

struct Unlocked {
  MasterKey key;
  VaultPayload payload;
};

Unlocked unlock(std::string_view master_password, const VaultEnvelope& env) {
  if (master_password.empty()) throw Error(ErrorKind::invalid_input, "master password is empty");
  auto key = derive_master_key(master_password, env.kdf_salt, env.iterations);
  const auto sub = vault_keys(key);
  const auto expected = hmac_sha256(sub.mac_key.view(), authenticated_prefix(env));
  if (!constant_time_equal(expected.view(), env.mac.view())) {
    throw Error(ErrorKind::authentication, "vault could not be unlocked");
  }
  Bytes plain;
  try {
    plain = aes256_cbc_decrypt(sub.enc_key.view(), env.iv, env.ciphertext);
  } catch (const Error&) {
    throw Error(ErrorKind::authentication, "vault could not be unlocked");
  }
  return {std::move(key), decode_payload(std::string_view(reinterpret_cast<const char*>(plain.data()), plain.size()))};
}

[[noreturn]] void io_failure(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorKind::io, what + " " + path.string() + ": " + std::strerror(errno));
}

}  // namespace

Bytes VaultEnvelope::serialize() const {
  auto out = authenticated_prefix(*this);
  out.insert(out.end(), mac.view().begin(), mac.view().end());
  return out;
}

VaultEnvelope VaultEnvelope::parse(ByteView bytes) {
  Reader in(bytes);
  const auto magic = in.take(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw Error(ErrorKind::format, "not a vault file");
  }
  VaultEnvelope env;
  env.format_version = in.u16();
  if (env.format_version != kFormatVersion) {
    throw Error(ErrorKind::format, "unsupported vault format version");
  }
  env.kdf_salt = KdfSalt::from(in.take(KdfSalt::size));
  env.iterations = in.u32();
  if (env.iterations == 0) throw Error(ErrorKind::format, "vault iteration count is zero");
  env.iv = Iv::from(in.take(Iv::size));
  const auto len = in.u32();
  const auto ct = in.take(len);
  env.ciphertext.assign(ct.begin(), ct.end());
  env.mac = Digest::from(in.take(Digest::size));
  if (!in.done()) throw Error(ErrorKind::format, "trailing bytes after vault");
  return env;
}

VaultEnvelope create_vault(std::string_view master_password, const VaultPayload& payload,
                           std::uint32_t iterations, RandomSource& rng) {
  if (master_password.empty()) throw Error(ErrorKind::invalid_input, "master password is empty");
  KdfSalt salt;
  rng.fill(salt.mutable_view());
  return seal(derive_master_key(master_password, salt, iterations), payload, rng);
}

VaultPayload open_vault(std::string_view master_password, const VaultEnvelope& envelope) {
  return unlock(master_password, envelope).payload;
}

VaultEnvelope update_vault(std::string_view master_password, const VaultEnvelope& envelope,
                           const VaultMutation& mutation, RandomSource& rng) {
  auto unlocked = unlock(master_password, envelope);
  mutation(unlocked.payload);
  return seal(unlocked.key, unlocked.payload, rng);
}

VaultEnvelope change_master_password(std::string_view old_password, std::string_view new_password,
                                     const VaultEnvelope& envelope, RandomSource& rng) {
  const auto unlocked = unlock(old_password, envelope);
  return create_vault(new_password, unlocked.payload, envelope.iterations, rng);
}

bool VaultFile::exists() const { return std::filesystem::exists(path_); }

VaultEnvelope VaultFile::read() const {
  if (!exists()) throw Error(ErrorKind::not_found, "no vault at " + path_.string());
  return VaultEnvelope::parse(read_file(path_));
}

void VaultFile::write(const VaultEnvelope& envelope) const {
  write_file_atomic(path_, envelope.serialize(), before_rename_);
}

void VaultFile::create(std::string_view master_password, const VaultPayload& payload,
                       std::uint32_t iterations, RandomSource& rng) const {
  if (exists()) throw Error(ErrorKind::state, "a vault already exists at " + path_.string());
  write(create_vault(master_password, payload, iterations, rng));
}

VaultPayload VaultFile::open(std::string_view master_password) const {
  return open_vault(master_password, read());
}

VaultPayload VaultFile::update(std::string_view master_password, const VaultMutation& mutation,
                               RandomSource& rng) const {
  VaultPayload result;
  write(update_vault(master_password, read(),
                     [&](VaultPayload& p) {
                       mutation(p);
                       result = p;
                     },
                     rng));
  return result;
}

void VaultFile::change_master_password(std::string_view old_password,
                                       std::string_view new_password, RandomSource& rng) const {
  write(palpas::change_master_password(old_password, new_password, read(), rng));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure("cannot open", path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, ByteView bytes,
                       const std::function<void()>& before_rename) {
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) io_failure("cannot create", tmp);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      io_failure("cannot write", tmp);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    io_failure("cannot sync", tmp);
  }
  ::close(fd);
  if (before_rename) before_rename();
  if (::rename(tmp.c_str(), path.c_str()) != 0) io_failure("cannot replace", path);
  auto dir = path.parent_path();
  if (dir.empty()) dir = ".";
  if (const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace palpas
