#include "palpas/sync.hpp"

#include <algorithm>

#include "palpas/error.hpp"
#include "palpas/generator.hpp"
#include "palpas/pki.hpp"

namespace palpas {

Bytes TransferBundle::raw() const {
  if (token.size() != kTokenBytes) throw Error(ErrorKind::invalid_input, "token has the wrong length");
  Bytes out;
  out.reserve(kRawSize);
  out.push_back(kFormatVersion);
  out.insert(out.end(), seed.view().begin(), seed.view().end());
  out.insert(out.end(), link_key.view().begin(), link_key.view().end());
  out.insert(out.end(), token.begin(), token.end());
  return out;
}

std::string TransferBundle::encode() const { return base64_encode(raw()); }

TransferBundle TransferBundle::decode(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  while (!text.empty() && (text.front() == ' ' || text.front() == '\n')) text.remove_prefix(1);
  Bytes raw;
  try {
    raw = base64_decode(text);
  } catch (const Error&) {
    throw Error(ErrorKind::format, "transfer bundle is not valid Base64");
  }
  if (raw.size() != kRawSize) {
    throw Error(ErrorKind::format, "transfer bundle must be 97 bytes, got " + std::to_string(raw.size()));
  }
  if (raw[0] != kFormatVersion) throw Error(ErrorKind::format, "unsupported transfer bundle version");
  const ByteView v(raw);
  TransferBundle b;
  b.seed = Seed::from(v.subspan(1, 32));
  b.link_key = LinkKey::from(v.subspan(33, 32));
  b.token.assign(raw.begin() + 65, raw.end());
  return b;
}

namespace {

const SaltRecord& select_record(const std::vector<SaltRecord>& records, const std::optional<std::string>& handle) {
  if (handle) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const SaltRecord& r) { return r.handle == *handle; });
    if (it == records.end()) throw Error(ErrorKind::not_found, "no record with handle " + *handle);
    return *it;
  }
  if (records.size() > 1) {
    throw Error(ErrorKind::invalid_input, "several accounts exist for this service; choose one by handle");
  }
  return records.front();
}

std::string open_username(const LinkKey& key, const SaltRecord& record) {
  try {
    return decrypt_username(key, record.username);
  } catch (const Error&) {
    throw Error(ErrorKind::corruption, "record " + record.handle + " failed username authentication");
  }
}

}  // namespace

SyncClient::SyncClient(VaultFile vault, SssConnector sss, std::shared_ptr<Transport> pps, RandomSource& rng,
                       std::uint32_t kdf_iterations)
    : vault_(std::move(vault)), sss_(std::move(sss)), pps_(std::move(pps)), rng_(rng), kdf_iterations_(kdf_iterations) {}

SssClient SyncClient::sss_for(const VaultPayload& payload) {
  return SssClient(sss_(Credential{payload.certificate_pem, payload.device_private_key_pem}));
}

Enrollment SyncClient::create_vault_after(std::string_view master_password, const Seed& seed,
                                          const LinkKey& link_key,
                                          const std::function<Enrollment(const std::string&)>& enroll) {
  if (vault_.exists()) throw Error(ErrorKind::state, "a vault already exists at " + vault_.path().string());
  if (master_password.empty()) throw Error(ErrorKind::invalid_input, "master password is empty");
  const auto key = PrivateKey::generate();
  const auto enrollment = enroll(make_csr(key));
  VaultPayload payload;
  payload.seed = seed;
  payload.link_key = link_key;
  payload.device_private_key_pem = key.to_pem();
  payload.certificate_pem = enrollment.certificate_pem;
  payload.fingerprint = enrollment.fingerprint;
  payload.account_id = enrollment.account_id;
  vault_.create(master_password, payload, kdf_iterations_, rng_);
  return enrollment;
}

Enrollment SyncClient::setup(std::string_view master_password) {
  if (vault_.exists()) throw Error(ErrorKind::state, "a vault already exists at " + vault_.path().string());
  const auto seed = generate_seed(rng_);
  const auto link_key = generate_link_key(rng_);
  return create_vault_after(master_password, seed, link_key, [&](const std::string& csr) {
    return SssClient(sss_(std::nullopt)).create_account(csr);
  });
}

std::string SyncClient::export_bundle(std::string_view master_password) {
  const auto payload = vault_.open(master_password);
  const auto token = sss_for(payload).issue_token();
  return TransferBundle{payload.seed, payload.link_key, token.value}.encode();
}

Enrollment SyncClient::import_bundle(std::string_view bundle_text, std::string_view master_password) {
  if (vault_.exists()) throw Error(ErrorKind::state, "a vault already exists at " + vault_.path().string());
  const auto bundle = TransferBundle::decode(bundle_text);
  return create_vault_after(master_password, bundle.seed, bundle.link_key, [&](const std::string& csr) {
    return SssClient(sss_(std::nullopt)).register_device(csr, bundle.token);
  });
}

CachedPolicy SyncClient::resolve_policy(const VaultPayload& payload, const std::string& url, bool& fetched) {
  fetched = false;
  if (const auto it = payload.cached_policies.find(url); it != payload.cached_policies.end()) return it->second;
  const auto published = pps_.fetch_policy(url);
  if (!published) {
    throw Error(ErrorKind::policy_missing,
                "no published password policy for " + url + "; submit one with `palpas policy submit`");
  }
  fetched = true;
  return {published->policy, published->version};
}

AddResult SyncClient::add_password(std::string_view master_password, const std::string& url,
                                   const std::string& username, bool allow_another) {
  if (url.empty()) throw Error(ErrorKind::invalid_input, "service url is empty");
  const auto payload = vault_.open(master_password);
  auto sss = sss_for(payload);
  const auto id = compute_identifier(payload.link_key, url);
  if (!allow_another && !sss.get_records(id).empty()) {
    throw Error(ErrorKind::account_exists, "an account for this service already exists");
  }
  bool fetched = false;
  const auto cached = resolve_policy(payload, url, fetched);
  const auto salt = generate_salt(rng_);
  auto password = generate_password(payload.seed, salt, cached.policy);
  const auto handle = sss.put_record(id, salt, encrypt_username(payload.link_key, username, rng_));
  if (fetched) {
    vault_.update(master_password, [&](VaultPayload& p) { p.cached_policies[url] = cached; }, rng_);
  }
  return {handle, std::move(password), cached.version};
}

std::vector<LoginResult> SyncClient::login(std::string_view master_password, const std::string& url) {
  const auto payload = vault_.open(master_password);
  const auto id = compute_identifier(payload.link_key, url);
  const auto records = sss_for(payload).get_records(id);
  if (records.empty()) throw Error(ErrorKind::no_account, "no account at this service");
  bool fetched = false;
  const auto cached = resolve_policy(payload, url, fetched);
  std::vector<LoginResult> out;
  for (const auto& r : records) {
    out.push_back({r.handle, open_username(payload.link_key, r), generate_password(payload.seed, r.salt, cached.policy), id});
  }
  if (fetched) {
    vault_.update(master_password, [&](VaultPayload& p) { p.cached_policies[url] = cached; }, rng_);
  }
  return out;
}

std::vector<PendingUpdate>::const_iterator SyncClient::find_pending(const VaultPayload& payload, const std::string& url,
                                                                   const std::optional<std::string>& handle) const {
  const auto& pending = payload.pending_updates;
  const auto matches = [&](const PendingUpdate& u) { return u.url == url && (!handle || u.handle == *handle); };
  const auto n = std::count_if(pending.begin(), pending.end(), matches);
  if (n == 0) throw Error(ErrorKind::state, "no proposed update for this service");
  if (n > 1) throw Error(ErrorKind::invalid_input, "several proposed updates for this service; choose one by handle");
  return std::find_if(pending.begin(), pending.end(), matches);
}

ProposedUpdate SyncClient::propose_update(std::string_view master_password, const std::string& url,
                                          const std::optional<std::string>& handle) {
  const auto payload = vault_.open(master_password);
  const auto id = compute_identifier(payload.link_key, url);
  const auto records = sss_for(payload).get_records(id);
  if (records.empty()) throw Error(ErrorKind::no_account, "no account at this service");
  const auto& record = select_record(records, handle);

  bool fetched = false;
  const auto current = resolve_policy(payload, url, fetched);
  ProposedUpdate out;
  out.handle = record.handle;
  out.username = open_username(payload.link_key, record);
  out.old_password = generate_password(payload.seed, record.salt, current.policy);

  // A newer policy is adopted only when no other account at the service
  // still derives its password from the cached one.
  std::optional<CachedPolicy> next;
  if (records.size() == 1) {
    if (const auto newer = pps_.fetch_policy(url, current.version)) next = CachedPolicy{newer->policy, newer->version};
  }
  const auto& policy = next ? next->policy : current.policy;
  Salt salt;
  do {
    salt = generate_salt(rng_);
    out.new_password = generate_password(payload.seed, salt, policy);
  } while (out.new_password == out.old_password);
  out.policy_version = next ? next->version : current.version;
  out.policy_changed = next.has_value();

  vault_.update(
      master_password,
      [&](VaultPayload& p) {
        if (fetched) p.cached_policies[url] = current;
        std::erase_if(p.pending_updates, [&](const PendingUpdate& u) { return u.url == url && u.handle == record.handle; });
        p.pending_updates.push_back({url, record.handle, salt, next});
      },
      rng_);
  return out;
}

LoginResult SyncClient::commit_update(std::string_view master_password, const std::string& url,
                                      const std::optional<std::string>& handle) {
  const auto payload = vault_.open(master_password);
  const auto pending = *find_pending(payload, url, handle);
  auto sss = sss_for(payload);
  const auto id = compute_identifier(payload.link_key, url);
  const auto records = sss.get_records(id);
  const auto& record = select_record(records, pending.handle);
  sss.put_record(id, pending.new_salt, record.username, pending.handle);

  const auto& policy = pending.policy ? pending.policy->policy : payload.cached_policies.at(url).policy;
  LoginResult result{pending.handle, open_username(payload.link_key, record),
                     generate_password(payload.seed, pending.new_salt, policy), id};
  vault_.update(
      master_password,
      [&](VaultPayload& p) {
        if (pending.policy) p.cached_policies[url] = *pending.policy;
        std::erase_if(p.pending_updates, [&](const PendingUpdate& u) { return u == pending; });
      },
      rng_);
  return result;
}

void SyncClient::abandon_update(std::string_view master_password, const std::string& url,
                                const std::optional<std::string>& handle) {
  const auto payload = vault_.open(master_password);
  const auto pending = *find_pending(payload, url, handle);
  vault_.update(
      master_password, [&](VaultPayload& p) { std::erase_if(p.pending_updates, [&](const PendingUpdate& u) { return u == pending; }); },
      rng_);
}

void SyncClient::revoke(std::string_view master_password, const std::string& fingerprint, bool confirm_last) {
  sss_for(vault_.open(master_password)).revoke_device(fingerprint, confirm_last);
}

std::vector<DeviceInfo> SyncClient::devices(std::string_view master_password) {
  return sss_for(vault_.open(master_password)).list_devices();
}

std::string SyncClient::fingerprint(std::string_view master_password) {
  return vault_.open(master_password).fingerprint;
}

}  // namespace palpas
