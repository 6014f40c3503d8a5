#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace storypipe::store {

// Content-addressed artifact sink for one run. put() returns the payload's
// "sha256:<hex>" digest, which run manifests record for later verification.
class ArtifactStore {
 public:
  virtual ~ArtifactStore() = default;
  virtual std::string put(const std::string& rel_path, std::string_view bytes) = 0;
  virtual std::string get(const std::string& rel_path) const = 0;  // throws Error on miss
  virtual bool exists(const std::string& rel_path) const = 0;
};

// Backs artifacts with real files under a run directory; writes are atomic
// (temp file + rename) so an interrupted run never leaves torn artifacts.
class DiskStore : public ArtifactStore {
 public:
  explicit DiskStore(std::filesystem::path root);
  std::string put(const std::string& rel_path, std::string_view bytes) override;
  std::string get(const std::string& rel_path) const override;
  bool exists(const std::string& rel_path) const override;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

// In-memory store for ablation trials and tests; thread-safe.
class MemStore : public ArtifactStore {
 public:
  std::string put(const std::string& rel_path, std::string_view bytes) override;
  std::string get(const std::string& rel_path) const override;
  bool exists(const std::string& rel_path) const override;
  std::vector<std::string> paths() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::string> files_;
};

}  // namespace storypipe::store
