#include "graphgrade/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace graphgrade {

WriterLock::WriterLock(const std::filesystem::path& dataset_root) {
  const auto path = dataset_root / ".grader.lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw LockHeldError("dataset " + dataset_root.string() + " is locked by another writer");
  }
}

WriterLock::~WriterLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

DatasetStore::DatasetStore(std::filesystem::path root)
    : root_(std::move(root)), manifest_(load_manifest(root_ / "manifest.json")) {}

DatasetManifest DatasetStore::snapshot() const {
  std::shared_lock lock(mutex_);
  return manifest_;
}

void DatasetStore::update(const std::function<void(DatasetManifest&)>& mutation) {
  std::unique_lock lock(mutex_);
  DatasetManifest next = manifest_;
  mutation(next);
  save_manifest(next, manifest_path());
  manifest_ = std::move(next);
}

}  // namespace graphgrade
