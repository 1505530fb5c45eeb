#include "obidos/blob_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace fs = std::filesystem;

namespace obidos {

namespace {

bool plausible_hash(const std::string& hash) {
  return hash.size() == 64 && hash.find_first_not_of("0123456789abcdef") == std::string::npos;
}

}  // namespace

BlobStore::BlobStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(*dir_); }

std::optional<fs::path> BlobStore::file_of(const std::string& hash) const {
  if (!dir_ || !plausible_hash(hash)) return std::nullopt;
  return *dir_ / hash.substr(0, 2) / hash;
}

std::string BlobStore::put(std::span<const std::byte> bytes) {
  std::string hash = sha256_hex(bytes);
  std::lock_guard lock(mutex_);
  if (!dir_) {
    memory_.try_emplace(hash, bytes.begin(), bytes.end());
    return hash;
  }
  fs::path file = *file_of(hash);
  if (fs::exists(file)) return hash;
  fs::create_directories(file.parent_path());
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::BlobNotFound, "cannot write " + tmp.string());
  }
  fs::rename(tmp, file);
  return hash;
}

Bytes BlobStore::read(const std::string& hash) const {
  if (!dir_) {
    auto it = memory_.find(hash);
    if (it == memory_.end()) throw Error(ErrorCode::BlobNotFound, hash);
    return it->second;
  }
  auto file = file_of(hash);
  if (!file || !fs::is_regular_file(*file)) throw Error(ErrorCode::BlobNotFound, hash);
  std::ifstream in(*file, std::ios::binary);
  std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  Bytes out(data.size());
  std::memcpy(out.data(), data.data(), data.size());
  return out;
}

Bytes BlobStore::get(const std::string& hash) const {
  std::lock_guard lock(mutex_);
  Bytes bytes = read(hash);
  if (sha256_hex(bytes) != hash) throw Error(ErrorCode::BlobNotFound, hash + " failed verification");
  return bytes;
}

bool BlobStore::contains(const std::string& hash) const {
  std::lock_guard lock(mutex_);
  if (!dir_) return memory_.contains(hash);
  auto file = file_of(hash);
  return file && fs::is_regular_file(*file);
}

bool BlobStore::remove(const std::string& hash) {
  std::lock_guard lock(mutex_);
  if (!dir_) return memory_.erase(hash) > 0;
  auto file = file_of(hash);
  return file && fs::remove(*file);
}

std::vector<std::string> BlobStore::hashes() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  if (!dir_) {
    for (const auto& [h, _] : memory_) out.push_back(h);
    return out;
  }
  for (const auto& entry : fs::recursive_directory_iterator(*dir_)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (plausible_hash(name)) out.push_back(std::move(name));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t BlobStore::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& h : hashes()) {
    std::lock_guard lock(mutex_);
    if (!dir_) {
      total += memory_.at(h).size();
    } else {
      total += fs::file_size(*file_of(h));
    }
  }
  return total;
}

std::vector<std::string> BlobStore::verify() const {
  std::vector<std::string> bad;
  for (const auto& h : hashes()) {
    try {
      (void)get(h);
    } catch (const Error&) {
      bad.push_back(h);
    }
  }
  return bad;
}

}  // namespace obidos
