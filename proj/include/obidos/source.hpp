#pragma once

// Data-source connectors with exact request/byte accounting, the simulated
// remote wrapper, and the deterministic synthetic corpus generator.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "obidos/model.hpp"

namespace obidos {

using Bytes = std::vector<std::byte>;

struct TransferStats {
  std::uint64_t metadata_requests = 0;
  std::uint64_t metadata_bytes = 0;
  std::uint64_t blob_requests = 0;
  std::uint64_t blob_bytes = 0;
  std::uint64_t listing_requests = 0;

  std::uint64_t requests() const noexcept { return metadata_requests + blob_requests + listing_requests; }
  std::uint64_t bytes() const noexcept { return metadata_bytes + blob_bytes; }
  bool zero() const noexcept { return requests() == 0 && bytes() == 0; }

  TransferStats& operator+=(const TransferStats& o) noexcept;
  friend TransferStats operator+(TransferStats a, const TransferStats& b) noexcept { return a += b; }
  /// Counter-wise difference; `a` must dominate `b`.
  friend TransferStats operator-(const TransferStats& a, const TransferStats& b) noexcept;

  bool operator==(const TransferStats&) const = default;
};

/// Thread-safe counters behind TransferStats.
class TransferMeter {
 public:
  void charge_listing() noexcept { listing_.fetch_add(1, std::memory_order_relaxed); }
  void charge_metadata(std::uint64_t bytes) noexcept {
    metadata_requests_.fetch_add(1, std::memory_order_relaxed);
    metadata_bytes_.fetch_add(bytes, std::memory_order_relaxed);
  }
  void charge_blob(std::uint64_t bytes) noexcept {
    blob_requests_.fetch_add(1, std::memory_order_relaxed);
    blob_bytes_.fetch_add(bytes, std::memory_order_relaxed);
  }
  TransferStats snapshot() const noexcept;

 private:
  std::atomic<std::uint64_t> metadata_requests_{0};
  std::atomic<std::uint64_t> metadata_bytes_{0};
  std::atomic<std::uint64_t> blob_requests_{0};
  std::atomic<std::uint64_t> blob_bytes_{0};
  std::atomic<std::uint64_t> listing_{0};
};

struct SourceDescriptor {
  std::string source_id;
  GranularitySchema schema;
  std::string root_uri;
  std::optional<std::string> access;
};

struct Blob {
  Bytes bytes;
  std::string hash;
};

/// Connector interface. The primitives (listing, metadata, blob) are virtual;
/// enumeration and source-side queries are built on them so every wrapper's
/// accounting and latency apply to the composite operations too.
class Source {
 public:
  virtual ~Source() = default;

  virtual const SourceDescriptor& descriptor() const = 0;
  /// Child ids in sorted order. Throws PathNotFound / SourceUnavailable.
  virtual std::vector<std::string> list_children(const EntryPath& path) = 0;
  virtual MetadataRecord fetch_metadata(const EntryPath& path) = 0;
  /// Only valid for leaf (image) paths.
  virtual Blob fetch_blob(const EntryPath& path) = 0;
  virtual TransferStats stats() const = 0;

  const std::string& id() const { return descriptor().source_id; }
  const GranularitySchema& schema() const { return descriptor().schema; }

  /// Every descendant of `root` (excluding `root` itself) in breadth-first
  /// order. One listing per internal node.
  std::vector<EntryPath> enumerate(const EntryPath& root);

  /// Paths at the query's target level inside `scope` that satisfy every
  /// predicate. Charges one listing per traversed internal node and one
  /// metadata fetch per candidate.
  std::vector<EntryPath> source_query(const VirtualReplica& scope, const UserQuery& q);
  /// Every record at the query's target level inside `scope`, matching or
  /// not, with the same traversal and charges as source_query.
  std::vector<MetadataRecord> examine(const VirtualReplica& scope, const UserQuery& q);
  /// As source_query, returning the examined records of the hits.
  std::vector<MetadataRecord> query_records(const VirtualReplica& scope, const UserQuery& q);
};

/// Reads the on-disk layout written by generate_synthetic_source.
class FilesystemSource final : public Source {
 public:
  /// Reads `<root>/source.json`. Throws SourceUnavailable if it is missing.
  explicit FilesystemSource(std::filesystem::path root);

  const SourceDescriptor& descriptor() const override { return descriptor_; }
  std::vector<std::string> list_children(const EntryPath& path) override;
  MetadataRecord fetch_metadata(const EntryPath& path) override;
  Blob fetch_blob(const EntryPath& path) override;
  TransferStats stats() const override { return meter_.snapshot(); }

  const std::filesystem::path& root() const noexcept { return root_; }
  /// Location of the metadata sidecar for `path`.
  std::filesystem::path sidecar_path(const EntryPath& path) const;
  std::filesystem::path blob_path(const EntryPath& path) const;

 private:
  std::filesystem::path dir_of(const EntryPath& path) const;
  void check_reachable() const;

  std::filesystem::path root_;
  SourceDescriptor descriptor_;
  TransferMeter meter_;
};

struct RemoteProfile {
  std::chrono::nanoseconds per_request_latency{std::chrono::milliseconds(20)};
  std::chrono::nanoseconds per_byte_latency{10};
};

/// Adds request and per-byte latency to another connector. Results and
/// accounting are those of the wrapped source.
class RemoteSource final : public Source {
 public:
  RemoteSource(std::shared_ptr<Source> inner, RemoteProfile profile);

  const SourceDescriptor& descriptor() const override { return inner_->descriptor(); }
  std::vector<std::string> list_children(const EntryPath& path) override;
  MetadataRecord fetch_metadata(const EntryPath& path) override;
  Blob fetch_blob(const EntryPath& path) override;
  TransferStats stats() const override { return inner_->stats(); }

  const RemoteProfile& profile() const noexcept { return profile_; }

 private:
  void delay(std::uint64_t bytes) const;

  std::shared_ptr<Source> inner_;
  RemoteProfile profile_;
};

struct MetadataProfile {
  /// Extra "notes" characters per record, to model metadata-heavy sources.
  std::size_t padding_bytes = 0;
};

struct GeneratorParams {
  std::string source_id = "src1";
  GranularitySchema schema = GranularitySchema::medical();
  /// Children per parent for each level, plus images per leaf container as
  /// the last element (n+1 values).
  std::vector<std::size_t> counts{2, 2, 2, 2, 2};
  std::size_t image_size_bytes = 512 * 1024;
  std::uint64_t seed = 1;
  MetadataProfile metadata;
  /// Entry id prefixes per depth (n+1 values); defaults to C, P, S, SE, I for
  /// the medical profile and L1..Ln, I otherwise.
  std::vector<std::string> id_prefixes;
  Timestamp base_time{1'600'000'000'000};
  /// Metadata-only trees still record file_size on every image.
  bool write_blobs = true;
};

struct GeneratedCorpus {
  std::string source_id;
  /// Entries per depth; index 0 is collections.
  std::vector<std::uint64_t> entries_per_depth;
  std::uint64_t metadata_bytes = 0;
  std::uint64_t blob_bytes = 0;

  std::uint64_t total_entries() const noexcept;
};

/// Writes a deterministic source tree to `dir` (created if absent). Throws
/// GeneratorRefused if `dir` exists and is not empty.
GeneratedCorpus generate_synthetic_source(const std::filesystem::path& dir, const GeneratorParams& params);

}  // namespace obidos
