#pragma once

// Append-only, length-prefixed, checksummed record log shared by the
// repository, the replicaset holder and the service layer.
//
// Record layout (little-endian):
//   u32 length   bytes of tag + body
//   u32 crc32    zlib CRC-32 of tag + body
//   u8  tag      RecordTag
//   body         canonical JSON

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "obidos/codec.hpp"

namespace obidos {

enum class RecordTag : std::uint8_t {
  // repository
  Proxy = 1,
  Promote = 2,
  Remove = 3,
  // replicaset holder
  HolderRegister = 16,
  HolderUnregister = 17,
  HolderPut = 18,
  HolderForget = 19,
  HolderUpdate = 20,
  // service / sharing
  Binding = 32,
  Grant = 33,
  Revoke = 34,
  SavedQuery = 35,
};

struct JournalRecord {
  RecordTag tag;
  Json body;
};

class Journal {
 public:
  /// Opens (creating if needed) the log at `file` for appending.
  explicit Journal(std::filesystem::path file);

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  void append(RecordTag tag, const Json& body);

  /// Calls `fn` for every intact record in order. A torn final record (short
  /// write) is cut off; a checksum failure before the tail throws
  /// JournalCorrupt.
  std::size_t replay(const std::function<void(const JournalRecord&)>& fn);

  /// Encoded bytes of one record, as written to disk.
  static std::string encode(RecordTag tag, const Json& body);

  const std::filesystem::path& path() const noexcept { return file_; }

 private:
  std::filesystem::path file_;
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace obidos
