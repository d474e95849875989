#include "palpas/sss.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>

#include "palpas/error.hpp"

namespace palpas {

using nlohmann::json;

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json username_to_json(const ProtectedUsername& blob) {
  return {{"iv", blob.iv.hex()}, {"ciphertext", base64_encode(blob.ciphertext)}, {"mac", blob.mac.hex()}};
}

ProtectedUsername username_from_json(const json& j) {
  ProtectedUsername blob;
  blob.iv = Iv::from_hex(j.at("iv").get<std::string>());
  blob.ciphertext = base64_decode(j.at("ciphertext").get<std::string>());
  blob.mac = Digest::from_hex(j.at("mac").get<std::string>());
  return blob;
}

namespace {

json record_to_json(const SaltRecord& r) {
  return {{"handle", r.handle}, {"salt", r.salt.hex()}, {"username", username_to_json(r.username)}};
}

SaltRecord record_from_json(const json& j) {
  return {j.at("handle").get<std::string>(), Salt::from_hex(j.at("salt").get<std::string>()),
          username_from_json(j.at("username"))};
}

json device_to_json(const DeviceInfo& d) {
  return {{"fingerprint", d.fingerprint}, {"enrolled_at", d.enrolled_at}, {"revoked", d.revoked}};
}

json enrollment_to_json(const Enrollment& e) {
  return {{"account_id", e.account_id},
          {"certificate", e.certificate_pem},
          {"fingerprint", e.fingerprint},
          {"ca_certificate", e.ca_certificate_pem}};
}

Enrollment enrollment_from_json(const json& j) {
  return {j.at("account_id").get<std::string>(), j.at("certificate").get<std::string>(),
          j.at("fingerprint").get<std::string>(), j.at("ca_certificate").get<std::string>()};
}

std::string token_digest(ByteView token) { return sha256(token).hex(); }

bool is_lower_hex(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

ServiceId identifier_from_segment(const std::string& segment) {
  if (segment.size() != 2 * ServiceId::size || !is_lower_hex(segment)) {
    throw Error(ErrorKind::protocol, "identifier must be 64 lowercase hex digits");
  }
  return ServiceId::from_hex(segment);
}

// Wraps JSON field access so malformed bodies surface as protocol errors.
template <class F>
auto with_body(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::protocol, std::string("malformed request: ") + e.what());
  }
}

}  // namespace

SaltSyncService::SaltSyncService(CertificateAuthority ca, std::shared_ptr<Journal> journal,
                                 RandomSource& rng, Clock clock)
    : ca_(std::move(ca)), journal_(std::move(journal)), rng_(rng), clock_(std::move(clock)) {
  for (const auto& line : journal_->entries()) {
    try {
      apply(json::parse(line));
    } catch (const json::exception&) {
      throw Error(ErrorKind::corruption, "unreadable journal entry");
    }
  }
}

void SaltSyncService::apply(const json& event) {
  const auto type = event.at("type").get<std::string>();
  const auto account_id = event.at("account").get<std::string>();
  if (type == "account" || type == "device") {
    const auto fp = event.at("fingerprint").get<std::string>();
    accounts_[account_id].devices.push_back({fp, event.at("at").get<std::int64_t>(), false});
    key_owner_[fp] = account_id;
    if (type == "device") tokens_[event.at("token").get<std::string>()].consumed = true;
    return;
  }
  auto& account = accounts_.at(account_id);
  if (type == "token") {
    tokens_[event.at("digest").get<std::string>()] = {account_id, event.at("expires_at").get<std::int64_t>(), false};
  } else if (type == "put") {
    auto record = record_from_json(event.at("record"));
    auto& list = account.records[event.at("id").get<std::string>()];
    auto it = std::find_if(list.begin(), list.end(), [&](const SaltRecord& r) { return r.handle == record.handle; });
    if (it == list.end()) {
      list.push_back(std::move(record));
    } else {
      *it = std::move(record);
    }
  } else if (type == "delete") {
    const auto id = event.at("id").get<std::string>();
    auto& list = account.records[id];
    std::erase_if(list, [&](const SaltRecord& r) { return r.handle == event.at("handle").get<std::string>(); });
    if (list.empty()) account.records.erase(id);
  } else if (type == "revoke") {
    for (auto& d : account.devices) {
      if (d.fingerprint == event.at("fingerprint").get<std::string>()) d.revoked = true;
    }
  } else {
    throw Error(ErrorKind::corruption, "unknown journal event " + type);
  }
}

void SaltSyncService::commit(const json& event) {
  journal_->append(event.dump());
  apply(event);
}

std::string SaltSyncService::authenticate(const std::optional<std::string>& peer) const {
  if (!peer) throw Error(ErrorKind::authentication, "client certificate required");
  std::optional<Certificate> cert;
  try {
    cert = Certificate::from_pem(*peer);
  } catch (const Error&) {
    throw Error(ErrorKind::authentication, "client certificate unreadable");
  }
  if (!ca_.verify(*cert)) throw Error(ErrorKind::authentication, "client certificate not trusted");
  const auto fp = cert->fingerprint();
  const auto owner = key_owner_.find(fp);
  if (owner == key_owner_.end()) throw Error(ErrorKind::authentication, "device not enrolled");
  for (const auto& d : accounts_.at(owner->second).devices) {
    if (d.fingerprint == fp && !d.revoked) return owner->second;
  }
  throw Error(ErrorKind::authentication, "device revoked");
}

IssuedCertificate SaltSyncService::issue(std::string_view csr_pem) const {
  auto issued = ca_.issue_client(csr_pem);
  std::shared_lock lock(mutex_);
  if (key_owner_.count(issued.fingerprint) != 0) {
    throw Error(ErrorKind::state, "key already enrolled");
  }
  return issued;
}

std::string SaltSyncService::random_hex(std::size_t n) {
  Bytes raw(n);
  rng_.fill(raw);
  return to_hex(raw);
}

Enrollment SaltSyncService::create_account(std::string_view csr_pem) {
  auto issued = issue(csr_pem);
  std::unique_lock lock(mutex_);
  if (key_owner_.count(issued.fingerprint) != 0) throw Error(ErrorKind::state, "key already enrolled");
  std::string account_id;
  do {
    account_id = random_hex(16);
  } while (accounts_.count(account_id) != 0);
  commit({{"type", "account"}, {"account", account_id}, {"fingerprint", issued.fingerprint}, {"at", clock_()}});
  return {account_id, issued.certificate_pem, issued.fingerprint, ca_.certificate_pem()};
}

IssuedToken SaltSyncService::issue_token(const std::optional<std::string>& peer) {
  std::unique_lock lock(mutex_);
  const auto account_id = authenticate(peer);
  IssuedToken token{Bytes(kTokenBytes), clock_() + kTokenLifetimeSeconds};
  rng_.fill(token.value);
  commit({{"type", "token"}, {"account", account_id}, {"digest", token_digest(token.value)},
          {"expires_at", token.expires_at}});
  return token;
}

Enrollment SaltSyncService::register_device(std::string_view csr_pem, ByteView token) {
  if (token.size() != kTokenBytes) throw Error(ErrorKind::enrollment, "enrollment token rejected");
  auto issued = issue(csr_pem);
  const auto digest = token_digest(token);
  std::unique_lock lock(mutex_);
  const auto it = tokens_.find(digest);
  // One message for every failure so the response does not reveal which
  // tokens exist.
  if (it == tokens_.end() || it->second.consumed || clock_() >= it->second.expires_at) {
    throw Error(ErrorKind::enrollment, "enrollment token rejected");
  }
  if (key_owner_.count(issued.fingerprint) != 0) throw Error(ErrorKind::state, "key already enrolled");
  const auto account_id = it->second.account_id;
  commit({{"type", "device"}, {"account", account_id}, {"fingerprint", issued.fingerprint},
          {"at", clock_()}, {"token", digest}});
  return {account_id, issued.certificate_pem, issued.fingerprint, ca_.certificate_pem()};
}

std::string SaltSyncService::put_record(const std::optional<std::string>& peer, const ServiceId& id,
                                        const Salt& salt, const ProtectedUsername& username,
                                        const std::optional<std::string>& replace_handle) {
  std::unique_lock lock(mutex_);
  const auto account_id = authenticate(peer);
  auto& account = accounts_.at(account_id);
  SaltRecord record{{}, salt, username};
  if (replace_handle) {
    const auto list = account.records.find(id.hex());
    const SaltRecord* current = nullptr;
    if (list != account.records.end()) {
      for (const auto& r : list->second) {
        if (r.handle == *replace_handle) current = &r;
      }
    }
    if (current == nullptr) throw Error(ErrorKind::not_found, "no record with that handle");
    record.handle = *replace_handle;
    if (*current == record) return record.handle;  // retried commit
  } else {
    record.handle = random_hex(16);
  }
  commit({{"type", "put"}, {"account", account_id}, {"id", id.hex()}, {"record", record_to_json(record)}});
  return record.handle;
}

std::vector<SaltRecord> SaltSyncService::get_records(const std::optional<std::string>& peer,
                                                     const ServiceId& id) {
  std::shared_lock lock(mutex_);
  const auto& account = accounts_.at(authenticate(peer));
  const auto it = account.records.find(id.hex());
  return it == account.records.end() ? std::vector<SaltRecord>{} : it->second;
}

void SaltSyncService::delete_record(const std::optional<std::string>& peer, const ServiceId& id,
                                    const std::string& handle) {
  std::unique_lock lock(mutex_);
  const auto account_id = authenticate(peer);
  const auto& account = accounts_.at(account_id);
  const auto it = account.records.find(id.hex());
  if (it == account.records.end() ||
      std::none_of(it->second.begin(), it->second.end(), [&](const SaltRecord& r) { return r.handle == handle; })) {
    throw Error(ErrorKind::not_found, "no record with that handle");
  }
  commit({{"type", "delete"}, {"account", account_id}, {"id", id.hex()}, {"handle", handle}});
}

void SaltSyncService::revoke_device(const std::optional<std::string>& peer,
                                    const std::string& fingerprint, bool confirm_last) {
  std::unique_lock lock(mutex_);
  const auto account_id = authenticate(peer);
  const auto owner = key_owner_.find(fingerprint);
  if (owner == key_owner_.end() || owner->second != account_id) {
    throw Error(ErrorKind::not_found, "no such device in this account");
  }
  const auto& devices = accounts_.at(account_id).devices;
  const auto target = std::find_if(devices.begin(), devices.end(),
                                   [&](const DeviceInfo& d) { return d.fingerprint == fingerprint; });
  if (target->revoked) return;
  const auto active = std::count_if(devices.begin(), devices.end(), [](const DeviceInfo& d) { return !d.revoked; });
  if (active == 1 && !confirm_last) {
    throw Error(ErrorKind::state, "revoking the last active device needs confirmation");
  }
  commit({{"type", "revoke"}, {"account", account_id}, {"fingerprint", fingerprint}});
}

std::vector<DeviceInfo> SaltSyncService::list_devices(const std::optional<std::string>& peer) {
  std::shared_lock lock(mutex_);
  return accounts_.at(authenticate(peer)).devices;
}

std::size_t SaltSyncService::account_count() const {
  std::shared_lock lock(mutex_);
  return accounts_.size();
}

Handler SaltSyncService::handler() {
  return [this](const WireRequest& request) {
    try {
      return route(request);
    } catch (const Error& e) {
      return error_response(e);
    }
  };
}

WireResponse SaltSyncService::route(const WireRequest& request) {
  const auto target = parse_target(request.target);
  const auto& seg = target.segments;
  const auto& method = request.method;
  const auto& peer = request.client_certificate_pem;

  if (seg.size() == 1 && seg[0] == "accounts" && method == "POST") {
    const auto csr = with_body([&] { return parse_json_body(request).at("csr").get<std::string>(); });
    return json_response(enrollment_to_json(create_account(csr)), 201);
  }
  if (seg.size() == 1 && seg[0] == "devices" && method == "POST") {
    const auto body = parse_json_body(request);
    const auto [csr, token_hex] = with_body([&] {
      return std::pair{body.at("csr").get<std::string>(), body.at("token").get<std::string>()};
    });
    Bytes token;
    try {
      token = from_hex(token_hex);
    } catch (const Error&) {
      throw Error(ErrorKind::enrollment, "enrollment token rejected");
    }
    return json_response(enrollment_to_json(register_device(csr, token)), 201);
  }
  if (seg.size() == 1 && seg[0] == "devices" && method == "GET") {
    json list = json::array();
    for (const auto& d : list_devices(peer)) list.push_back(device_to_json(d));
    return json_response({{"devices", list}});
  }
  if (seg.size() == 1 && seg[0] == "tokens" && method == "POST") {
    const auto token = issue_token(peer);
    return json_response({{"token", to_hex(token.value)}, {"expires_at", token.expires_at}}, 201);
  }
  if (seg.size() == 1 && seg[0] == "revocations" && method == "POST") {
    const auto body = parse_json_body(request);
    with_body([&] {
      revoke_device(peer, body.at("fingerprint").get<std::string>(), body.value("confirm_last", false));
      return 0;
    });
    return json_response({{"status", "revoked"}});
  }
  if (seg.size() == 2 && seg[0] == "records") {
    const auto id = identifier_from_segment(seg[1]);
    if (method == "GET") {
      json list = json::array();
      for (const auto& r : get_records(peer, id)) list.push_back(record_to_json(r));
      return json_response({{"records", list}});
    }
    if (method == "PUT") {
      const auto body = parse_json_body(request);
      const auto handle = with_body([&] {
        std::optional<std::string> replace;
        if (body.contains("replace") && !body["replace"].is_null()) replace = body["replace"].get<std::string>();
        return put_record(peer, id, Salt::from_hex(body.at("salt").get<std::string>()),
                          username_from_json(body.at("username")), replace);
      });
      return json_response({{"handle", handle}});
    }
    if (method == "DELETE") {
      const auto handle = target.query.find("handle");
      if (handle == target.query.end()) throw Error(ErrorKind::protocol, "handle query parameter required");
      delete_record(peer, id, handle->second);
      return json_response({{"status", "deleted"}});
    }
  }
  throw Error(ErrorKind::not_found, "no route for " + method + " " + request.target);
}

json SssClient::call(const std::string& method, const std::string& target, const std::optional<json>& body) {
  WireRequest request;
  request.method = method;
  request.target = target;
  if (body) {
    request.headers["Content-Type"] = "application/json";
    request.body = body->dump();
  }
  return expect_json(transport_->send(std::move(request)));
}

Enrollment SssClient::create_account(const std::string& csr_pem) {
  return with_body([&] { return enrollment_from_json(call("POST", "/accounts", json{{"csr", csr_pem}})); });
}

IssuedToken SssClient::issue_token() {
  return with_body([&] {
    const auto doc = call("POST", "/tokens");
    auto value = from_hex(doc.at("token").get<std::string>());
    if (value.size() != kTokenBytes) throw Error(ErrorKind::protocol, "token has the wrong length");
    return IssuedToken{std::move(value), doc.at("expires_at").get<std::int64_t>()};
  });
}

Enrollment SssClient::register_device(const std::string& csr_pem, ByteView token) {
  return with_body([&] {
    return enrollment_from_json(call("POST", "/devices", json{{"csr", csr_pem}, {"token", to_hex(token)}}));
  });
}

std::string SssClient::put_record(const ServiceId& id, const Salt& salt, const ProtectedUsername& username,
                                  const std::optional<std::string>& replace_handle) {
  json body = {{"salt", salt.hex()}, {"username", username_to_json(username)}};
  if (replace_handle) body["replace"] = *replace_handle;
  return with_body([&] { return call("PUT", "/records/" + id.hex(), body).at("handle").get<std::string>(); });
}

std::vector<SaltRecord> SssClient::get_records(const ServiceId& id) {
  return with_body([&] {
    std::vector<SaltRecord> out;
    const auto doc = call("GET", "/records/" + id.hex());
    for (const auto& r : doc.at("records")) out.push_back(record_from_json(r));
    return out;
  });
}

void SssClient::delete_record(const ServiceId& id, const std::string& handle) {
  call("DELETE", "/records/" + id.hex() + "?handle=" + percent_encode(handle));
}

void SssClient::revoke_device(const std::string& fingerprint, bool confirm_last) {
  call("POST", "/revocations", json{{"fingerprint", fingerprint}, {"confirm_last", confirm_last}});
}

std::vector<DeviceInfo> SssClient::list_devices() {
  return with_body([&] {
    std::vector<DeviceInfo> out;
    const auto doc = call("GET", "/devices");
    for (const auto& d : doc.at("devices")) {
      out.push_back({d.at("fingerprint").get<std::string>(), d.at("enrolled_at").get<std::int64_t>(),
                     d.at("revoked").get<bool>()});
    }
    return out;
  });
}

}  // namespace palpas
