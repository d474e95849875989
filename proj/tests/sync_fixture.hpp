#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>

#include "palpas/pps.hpp"
#include "palpas/sss.hpp"
#include "palpas/sync.hpp"

namespace palpas::testing {

inline constexpr std::uint32_t kFastKdfIterations = 1000;

struct ScratchDir {
  ScratchDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("palpas-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() { std::filesystem::remove_all(path); }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  std::filesystem::path path;
};

// Both services in process, with every client->SSS exchange captured.
class World {
 public:
  explicit World(std::shared_ptr<Journal> sss_journal = std::make_shared<MemoryJournal>())
      : sss_journal(std::move(sss_journal)),
        sss(CertificateAuthority::create("palpas test sss"), this->sss_journal, system_random(),
            [this] { return now; }),
        pps(std::make_shared<MemoryJournal>(), [this] { return now; }) {}

  SssConnector connector() {
    return [this](const std::optional<Credential>& cred) -> std::shared_ptr<Transport> {
      auto inner = std::make_shared<InProcessTransport>(
          sss.handler(), cred ? std::optional<std::string>(cred->certificate_pem) : std::nullopt);
      auto capturing = std::make_shared<CapturingTransport>(inner);
      captures.push_back(capturing);
      return capturing;
    };
  }

  std::shared_ptr<Transport> pps_transport() { return std::make_shared<InProcessTransport>(pps.handler()); }

  SyncClient device(const std::filesystem::path& vault_path) {
    return SyncClient(VaultFile(vault_path), connector(), pps_transport(), system_random(), kFastKdfIterations);
  }

  void publish(const std::string& url, const PasswordPolicy& policy) {
    for (auto who : {"seed-submitter-1", "seed-submitter-2", "seed-submitter-3"}) pps.submit_policy(url, policy, who);
  }

  // Every byte that crossed the client->SSS seam, requests and responses.
  std::string sss_traffic() const {
    std::string all;
    for (const auto& c : captures) {
      for (const auto& e : c->exchanges()) {
        all += e.request.method + " " + e.request.target + "\n";
        for (const auto& [k, v] : e.request.headers) all += k + ": " + v + "\n";
        all += e.request.body + "\n";
        all += e.response.body + "\n";
      }
    }
    return all;
  }

  std::int64_t now = 1'700'000'000;
  std::shared_ptr<Journal> sss_journal;
  SaltSyncService sss;
  PolicyService pps;
  std::vector<std::shared_ptr<CapturingTransport>> captures;
};

}  // namespace palpas::testing
