#pragma once

// Content-addressed blob storage: `<dir>/<first 2 hex>/<sha256>`. Without a
// directory the store keeps blobs in memory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obidos/source.hpp"

namespace obidos {

class BlobStore {
 public:
  BlobStore() = default;
  explicit BlobStore(std::filesystem::path dir);

  /// Stores `bytes` once per distinct content; returns the hash.
  std::string put(std::span<const std::byte> bytes);
  /// Reads and re-verifies the blob. Throws BlobNotFound if it is absent or
  /// its content no longer matches the hash.
  Bytes get(const std::string& hash) const;
  bool contains(const std::string& hash) const;
  bool remove(const std::string& hash);

  std::vector<std::string> hashes() const;
  std::uint64_t total_bytes() const;
  /// Hashes whose stored bytes fail re-verification.
  std::vector<std::string> verify() const;

  std::optional<std::filesystem::path> file_of(const std::string& hash) const;

 private:
  Bytes read(const std::string& hash) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mutex_;
  std::map<std::string, Bytes> memory_;
};

}  // namespace obidos
