#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <shared_mutex>

#include "graphgrade/dataset.hpp"

namespace graphgrade {

class LockHeldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Advisory, process-level writer lock on a dataset root (`.grader.lock`).
class WriterLock {
 public:
  explicit WriterLock(const std::filesystem::path& dataset_root);
  ~WriterLock();
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;

 private:
  int fd_ = -1;
};

/// Single-writer, multi-reader access to one dataset's manifest.
///
/// Readers get consistent snapshots. `update` runs the mutation on a copy, validates it,
/// persists atomically, and only then publishes it; a throwing mutation or a failed
/// validation leaves both memory and disk untouched.
class DatasetStore {
 public:
  explicit DatasetStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }

  DatasetManifest snapshot() const;

  template <typename Fn>
  auto read(Fn&& fn) const {
    std::shared_lock lock(mutex_);
    return fn(static_cast<const DatasetManifest&>(manifest_));
  }

  void update(const std::function<void(DatasetManifest&)>& mutation);

 private:
  std::filesystem::path root_;
  mutable std::shared_mutex mutex_;
  DatasetManifest manifest_;
};

}  // namespace graphgrade
