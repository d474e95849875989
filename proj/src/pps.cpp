#include "palpas/pps.hpp"

#include <charconv>
#include <cstdio>

#include "palpas/error.hpp"

namespace palpas {

using nlohmann::json;

std::string_view to_string(SubmissionStatus status) {
  switch (status) {
    case SubmissionStatus::pending: return "pending";
    case SubmissionStatus::published: return "published";
    case SubmissionStatus::current: return "current";
  }
  return "unknown";
}

namespace {

std::uint64_t parse_u64(const std::string& text, const char* what) {
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorKind::invalid_input, std::string(what) + " must be a non-negative integer");
  }
  return value;
}

void require_nonempty(const std::string& value, const char* what) {
  if (value.empty()) throw Error(ErrorKind::invalid_input, std::string(what) + " is required");
}

std::string format_decimal(double mean) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", mean);
  return buf;
}

}  // namespace

PolicyService::PolicyService(std::shared_ptr<Journal> journal, Clock clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
  for (const auto& line : journal_->entries()) {
    try {
      const auto event = json::parse(line);
      const auto type = event.at("type").get<std::string>();
      if (type == "submit") {
        apply_submission(event.at("url").get<std::string>(), event.at("policy").get<std::string>(),
                         event.at("submitter").get<std::string>(), event.at("at").get<std::int64_t>());
      } else if (type == "rate") {
        apply_rating(event.at("url").get<std::string>(), event.at("version").get<std::uint64_t>(),
                     event.at("rating").get<int>(), event.at("submitter").get<std::string>());
      } else {
        throw Error(ErrorKind::corruption, "unknown journal event " + type);
      }
    } catch (const json::exception&) {
      throw Error(ErrorKind::corruption, "unreadable journal entry");
    }
  }
}

SubmissionResult PolicyService::apply_submission(const std::string& url, const std::string& canonical,
                                                 const std::string& submitter, std::int64_t at) {
  auto& state = urls_[url];
  if (!state.published.empty() && serialize_policy(state.published.back().policy) == canonical) {
    return {SubmissionStatus::current, state.published.back().version, 0};
  }
  auto& supporters = state.candidates[canonical];
  supporters.insert(submitter);
  if (supporters.size() < kPublicationThreshold) return {SubmissionStatus::pending, 0, supporters.size()};

  const auto count = supporters.size();
  // Counting restarts, so a policy that is later superseded needs a fresh
  // quorum to come back.
  state.candidates.erase(canonical);
  PublishedPolicy p;
  p.url = url;
  p.version = state.published.size() + 1;
  p.policy = parse_policy(canonical);
  p.policy.version = p.version;
  p.published_at = at;
  state.published.push_back(std::move(p));
  return {SubmissionStatus::published, state.published.back().version, count};
}

void PolicyService::apply_rating(const std::string& url, std::uint64_t version, int rating,
                                 const std::string& submitter) {
  auto& state = urls_.at(url);
  auto& published = state.published.at(version - 1);
  auto& votes = state.ratings[version];
  if (const auto old = votes.find(submitter); old != votes.end()) {
    published.rating_sum -= static_cast<std::uint64_t>(old->second);
    --published.rating_count;
  }
  votes[submitter] = rating;
  published.rating_sum += static_cast<std::uint64_t>(rating);
  ++published.rating_count;
}

SubmissionResult PolicyService::submit_policy(const std::string& url, const PasswordPolicy& policy,
                                              const std::string& submitter) {
  require_nonempty(url, "url");
  require_nonempty(submitter, "submitter");
  validate_policy(policy);
  const double bits = max_entropy_bits(policy);
  if (bits < kMinPolicyEntropyBits) {
    throw Error(ErrorKind::validation, "policy allows at most " + format_decimal(bits) +
                                           " bits of entropy, below the 40-bit threshold");
  }
  const auto canonical = serialize_policy(policy);
  std::lock_guard lock(mutex_);
  const auto at = clock_();
  const auto it = urls_.find(url);
  const bool is_current = it != urls_.end() && !it->second.published.empty() &&
                          serialize_policy(it->second.published.back().policy) == canonical;
  if (!is_current) {
    journal_->append(json{{"type", "submit"}, {"url", url}, {"submitter", submitter}, {"policy", canonical}, {"at", at}}
                         .dump());
  }
  return apply_submission(url, canonical, submitter, at);
}

std::optional<PublishedPolicy> PolicyService::fetch_policy(const std::string& url,
                                                           std::optional<std::uint64_t> min_version) const {
  std::lock_guard lock(mutex_);
  const auto it = urls_.find(url);
  if (it == urls_.end() || it->second.published.empty()) return std::nullopt;
  const auto& latest = it->second.published.back();
  if (min_version && latest.version <= *min_version) return std::nullopt;
  return latest;
}

void PolicyService::rate_policy(const std::string& url, std::uint64_t version, int rating,
                                const std::string& submitter) {
  require_nonempty(submitter, "submitter");
  if (rating < 1 || rating > 5) throw Error(ErrorKind::invalid_input, "rating must be between 1 and 5");
  std::lock_guard lock(mutex_);
  const auto it = urls_.find(url);
  if (it == urls_.end() || version == 0 || version > it->second.published.size()) {
    throw Error(ErrorKind::not_found, "no published policy with that version");
  }
  journal_->append(
      json{{"type", "rate"}, {"url", url}, {"version", version}, {"rating", rating}, {"submitter", submitter}}.dump());
  apply_rating(url, version, rating, submitter);
}

Handler PolicyService::handler() {
  return [this](const WireRequest& request) {
    try {
      return route(request);
    } catch (const Error& e) {
      return error_response(e);
    }
  };
}

WireResponse PolicyService::route(const WireRequest& request) {
  const auto target = parse_target(request.target);
  const auto& seg = target.segments;
  auto query = [&](const std::string& key) -> std::optional<std::string> {
    const auto it = target.query.find(key);
    return it == target.query.end() ? std::nullopt : std::optional<std::string>(it->second);
  };

  if (seg.size() == 1 && seg[0] == "policies" && request.method == "GET") {
    const auto url = query("url");
    if (!url) throw Error(ErrorKind::invalid_input, "url query parameter required");
    std::optional<std::uint64_t> min_version;
    if (const auto mv = query("min_version"); mv && !mv->empty()) min_version = parse_u64(*mv, "min_version");
    const auto published = fetch_policy(*url, min_version);
    WireResponse r;
    if (!published) {
      r.status = 204;
      return r;
    }
    r.headers["Content-Type"] = "application/xml";
    r.headers["X-Policy-Version"] = std::to_string(published->version);
    r.headers["X-Published-At"] = std::to_string(published->published_at);
    r.headers["X-Rating-Count"] = std::to_string(published->rating_count);
    r.headers["X-Rating-Sum"] = std::to_string(published->rating_sum);
    r.headers["X-Rating-Mean"] = format_decimal(published->rating_mean());
    r.body = serialize_policy(published->policy);
    return r;
  }
  if (seg.size() == 1 && seg[0] == "policies" && request.method == "POST") {
    const auto url = query("url");
    const auto submitter = query("submitter");
    if (!url || !submitter) throw Error(ErrorKind::invalid_input, "url and submitter query parameters required");
    const auto result = submit_policy(*url, parse_policy(request.body), *submitter);
    json body = {{"status", std::string(to_string(result.status))}, {"supporters", result.supporters}};
    if (result.status != SubmissionStatus::pending) body["version"] = result.version;
    return json_response(body, result.status == SubmissionStatus::published ? 201 : 200);
  }
  if (seg.size() == 4 && seg[0] == "policies" && seg[3] == "ratings" && request.method == "POST") {
    const auto version = parse_u64(seg[2], "version");
    const auto body = parse_json_body(request);
    int rating = 0;
    std::string submitter;
    try {
      rating = body.at("rating").get<int>();
      submitter = body.at("submitter").get<std::string>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::invalid_input, "rating body needs integer rating and submitter");
    }
    rate_policy(seg[1], version, rating, submitter);
    return json_response({{"status", "recorded"}});
  }
  throw Error(ErrorKind::not_found, "no route for " + request.method + " " + request.target);
}

SubmissionResult PpsClient::submit_policy(const std::string& url, const PasswordPolicy& policy,
                                          const std::string& submitter) {
  WireRequest request;
  request.method = "POST";
  request.target = "/policies?url=" + percent_encode(url) + "&submitter=" + percent_encode(submitter);
  request.headers["Content-Type"] = "application/xml";
  request.body = serialize_policy(policy);
  const auto doc = expect_json(transport_->send(std::move(request)));
  try {
    SubmissionResult result;
    const auto status = doc.at("status").get<std::string>();
    result.status = status == "published" ? SubmissionStatus::published
                    : status == "current" ? SubmissionStatus::current
                                          : SubmissionStatus::pending;
    result.version = doc.value("version", std::uint64_t{0});
    result.supporters = doc.value("supporters", std::size_t{0});
    return result;
  } catch (const json::exception&) {
    throw Error(ErrorKind::protocol, "malformed submission response");
  }
}

std::optional<PublishedPolicy> PpsClient::fetch_policy(const std::string& url,
                                                       std::optional<std::uint64_t> min_version) {
  WireRequest request;
  request.method = "GET";
  request.target = "/policies?url=" + percent_encode(url);
  if (min_version) request.target += "&min_version=" + std::to_string(*min_version);
  const auto response = transport_->send(std::move(request));
  if (response.status == 204) return std::nullopt;
  if (response.status != 200) throw_wire_error(response);
  auto header = [&](const std::string& name) -> std::string {
    const auto it = response.headers.find(name);
    if (it == response.headers.end()) throw Error(ErrorKind::protocol, "response lacks " + name);
    return it->second;
  };
  PublishedPolicy p;
  p.url = url;
  p.version = parse_u64(header("X-Policy-Version"), "X-Policy-Version");
  p.rating_count = parse_u64(header("X-Rating-Count"), "X-Rating-Count");
  p.rating_sum = parse_u64(header("X-Rating-Sum"), "X-Rating-Sum");
  if (const auto it = response.headers.find("X-Published-At"); it != response.headers.end()) {
    p.published_at = static_cast<std::int64_t>(parse_u64(it->second, "X-Published-At"));
  }
  p.policy = parse_policy(response.body);
  p.policy.version = p.version;
  return p;
}

void PpsClient::rate_policy(const std::string& url, std::uint64_t version, int rating, const std::string& submitter) {
  WireRequest request;
  request.method = "POST";
  request.target = "/policies/" + percent_encode(url) + "/" + std::to_string(version) + "/ratings";
  request.headers["Content-Type"] = "application/json";
  request.body = json{{"rating", rating}, {"submitter", submitter}}.dump();
  expect_json(transport_->send(std::move(request)));
}

}  // namespace palpas
