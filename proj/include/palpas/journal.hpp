#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace palpas {

// Append-only event log backing the services. Each entry is one line of
// JSON; state is rebuilt by replaying entries in order.
class Journal {
 public:
  virtual ~Journal() = default;
  virtual void append(std::string_view entry) = 0;
  virtual std::vector<std::string> entries() const = 0;
};

class MemoryJournal final : public Journal {
 public:
  void append(std::string_view entry) override;
  std::vector<std::string> entries() const override;
  std::string raw() const;

 private:
  mutable std::mutex mutex_;
  std::string data_;
};

// Each append is written and fsynced before it returns. A torn final line
// left by a crash is dropped on replay.
class FileJournal final : public Journal {
 public:
  explicit FileJournal(std::filesystem::path path);
  ~FileJournal() override;
  FileJournal(const FileJournal&) = delete;
  FileJournal& operator=(const FileJournal&) = delete;

  void append(std::string_view entry) override;
  std::vector<std::string> entries() const override;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mutex_;
};

}  // namespace palpas
