#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace obidos {

enum class ErrorCode {
  InvalidPath,
  InvalidReplicaSet,
  SourceNotInReplicaSet,
  DeserializeError,
  UnknownSource,
  PathNotFound,
  SourceUnavailable,
  GeneratorRefused,
  InvalidRecord,
  BlobNotFound,
  InvalidQuery,
  UnknownReplicaSet,
  DuplicateReplicaSet,
  ShareFailed,
  AccessDenied,
  SenderUnavailable,
  JournalCorrupt,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;
/// Inverse of to_string; ConfigError for unknown names.
ErrorCode error_code_from_string(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DeserializeError : public Error {
 public:
  DeserializeError(std::size_t offset, const std::string& what)
      : Error(ErrorCode::DeserializeError, "at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace obidos
