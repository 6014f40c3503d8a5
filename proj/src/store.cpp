#include "storypipe/store.hpp"

#include "storypipe/errors.hpp"
#include "storypipe/util.hpp"

namespace storypipe::store {

DiskStore::DiskStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::string DiskStore::put(const std::string& rel_path, std::string_view bytes) {
  std::filesystem::path target = root_ / rel_path;
  std::filesystem::create_directories(target.parent_path());
  util::write_file_atomic(target, bytes);
  return "sha256:" + util::sha256_hex(bytes);
}

std::string DiskStore::get(const std::string& rel_path) const {
  std::filesystem::path target = root_ / rel_path;
  if (!std::filesystem::exists(target)) {
    throw Error("no artifact at '" + rel_path + "'");
  }
  return util::read_file(target);
}

bool DiskStore::exists(const std::string& rel_path) const {
  return std::filesystem::exists(root_ / rel_path);
}

std::string MemStore::put(const std::string& rel_path, std::string_view bytes) {
  std::lock_guard<std::mutex> lock(mutex_);
  files_[rel_path] = std::string(bytes);
  return "sha256:" + util::sha256_hex(bytes);
}

std::string MemStore::get(const std::string& rel_path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = files_.find(rel_path);
  if (it == files_.end()) throw Error("no artifact at '" + rel_path + "'");
  return it->second;
}

bool MemStore::exists(const std::string& rel_path) const {
  std::lock_guard<std::mutex> lock(mutex_);
  return files_.count(rel_path) > 0;
}

std::vector<std::string> MemStore::paths() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::string> out;
  out.reserve(files_.size());
  for (const auto& [path, bytes] : files_) out.push_back(path);
  return out;
}

}  // namespace storypipe::store
