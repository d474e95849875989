#include "palpas/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "palpas/error.hpp"
#include "palpas/vault.hpp"

namespace palpas {

namespace {

std::vector<std::string> split_lines(std::string_view data) {
  std::vector<std::string> out;
  while (!data.empty()) {
    const auto nl = data.find('\n');
    if (nl == std::string_view::npos) break;  // torn tail
    if (nl > 0) out.emplace_back(data.substr(0, nl));
    data.remove_prefix(nl + 1);
  }
  return out;
}

void check_entry(std::string_view entry) {
  if (entry.find('\n') != std::string_view::npos) {
    throw Error(ErrorKind::invalid_input, "journal entries are single lines");
  }
}

}  // namespace

void MemoryJournal::append(std::string_view entry) {
  check_entry(entry);
  std::lock_guard lock(mutex_);
  data_.append(entry);
  data_ += '\n';
}

std::vector<std::string> MemoryJournal::entries() const {
  std::lock_guard lock(mutex_);
  return split_lines(data_);
}

std::string MemoryJournal::raw() const {
  std::lock_guard lock(mutex_);
  return data_;
}

FileJournal::FileJournal(std::filesystem::path path) : path_(std::move(path)) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0600);
  if (fd_ < 0) {
    throw Error(ErrorKind::io, "cannot open journal " + path_.string() + ": " + std::strerror(errno));
  }
  // Cut a torn tail so the next append starts on a fresh line.
  const auto bytes = read_file(path_);
  std::size_t keep = bytes.size();
  while (keep > 0 && bytes[keep - 1] != '\n') --keep;
  if (keep != bytes.size() && ::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
    ::close(fd_);
    throw Error(ErrorKind::io, "cannot repair journal " + path_.string());
  }
}

FileJournal::~FileJournal() {
  if (fd_ >= 0) ::close(fd_);
}

void FileJournal::append(std::string_view entry) {
  check_entry(entry);
  std::string line(entry);
  line += '\n';
  std::lock_guard lock(mutex_);
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::io, "journal write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fdatasync(fd_) != 0) {
    throw Error(ErrorKind::io, "journal sync failed: " + std::string(std::strerror(errno)));
  }
}

std::vector<std::string> FileJournal::entries() const {
  const auto bytes = read_file(path_);
  return split_lines(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace palpas
