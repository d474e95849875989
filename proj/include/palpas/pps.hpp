#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "palpas/journal.hpp"
#include "palpas/policy.hpp"
#include "palpas/sss.hpp"
#include "palpas/wire.hpp"

namespace palpas {

inline constexpr std::size_t kPublicationThreshold = 3;
inline constexpr double kMinPolicyEntropyBits = 40.0;

struct PublishedPolicy {
  std::string url;
  PasswordPolicy policy;  // policy.version == version
  std::uint64_t version = 0;
  std::int64_t published_at = 0;
  std::uint64_t rating_sum = 0;
  std::uint64_t rating_count = 0;

  double rating_mean() const { return rating_count == 0 ? 0.0 : double(rating_sum) / double(rating_count); }
};

enum class SubmissionStatus { pending, published, current };
std::string_view to_string(SubmissionStatus status);

struct SubmissionResult {
  SubmissionStatus status = SubmissionStatus::pending;
  std::uint64_t version = 0;    // set unless pending
  std::size_t supporters = 0;   // distinct submitters behind this candidate
};

// Policy service. A policy for a url is published once kPublicationThreshold
// distinct submitters sent byte-identical canonical forms of it; each newly
// published distinct policy gets the next version. Ratings are display-only.
class PolicyService {
 public:
  explicit PolicyService(std::shared_ptr<Journal> journal, Clock clock = unix_now);

  // Error(validation) for invalid or low-entropy policies.
  SubmissionResult submit_policy(const std::string& url, const PasswordPolicy& policy,
                                 const std::string& submitter);
  // Latest published policy; with min_version only when it is newer.
  std::optional<PublishedPolicy> fetch_policy(const std::string& url,
                                              std::optional<std::uint64_t> min_version = std::nullopt) const;
  // Error(not_found) for unknown (url, version), Error(invalid_input) for a
  // rating outside 1..5.
  void rate_policy(const std::string& url, std::uint64_t version, int rating, const std::string& submitter);

  Handler handler();

 private:
  struct UrlState {
    std::vector<PublishedPolicy> published;                       // index = version - 1
    std::map<std::string, std::set<std::string>> candidates;      // canonical -> submitters
    std::map<std::uint64_t, std::map<std::string, int>> ratings;  // version -> submitter -> rating
  };

  SubmissionResult apply_submission(const std::string& url, const std::string& canonical,
                                    const std::string& submitter, std::int64_t at);
  void apply_rating(const std::string& url, std::uint64_t version, int rating, const std::string& submitter);
  WireResponse route(const WireRequest& request);

  std::shared_ptr<Journal> journal_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, UrlState> urls_;
};

class PpsClient {
 public:
  explicit PpsClient(std::shared_ptr<Transport> transport) : transport_(std::move(transport)) {}

  SubmissionResult submit_policy(const std::string& url, const PasswordPolicy& policy,
                                 const std::string& submitter);
  std::optional<PublishedPolicy> fetch_policy(const std::string& url,
                                              std::optional<std::uint64_t> min_version = std::nullopt);
  void rate_policy(const std::string& url, std::uint64_t version, int rating, const std::string& submitter);

 private:
  std::shared_ptr<Transport> transport_;
};

}  // namespace palpas
