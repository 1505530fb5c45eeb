#pragma once

// The integrated data repository: metadata records and virtual proxies keyed
// by (source, path), a metadata index over full records, and a
// content-addressed blob store. Mutations are journaled; the in-memory state
// is rebuilt by replaying the journal.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "obidos/blob_store.hpp"
#include "obidos/journal.hpp"
#include "obidos/model.hpp"

namespace obidos {

enum class Marker { Proxy, Full };

struct RepoEntry {
  std::string source_id;
  std::variant<VirtualProxy, MetadataRecord> value;

  bool is_full() const noexcept { return std::holds_alternative<MetadataRecord>(value); }
  const EntryPath& path() const;
  const MetadataRecord& record() const { return std::get<MetadataRecord>(value); }
  Marker marker() const noexcept { return is_full() ? Marker::Full : Marker::Proxy; }

  bool operator==(const RepoEntry&) const = default;
};

/// (source, depth) -> attribute -> literal -> paths, over full records only.
class MetadataIndex {
 public:
  void add(const std::string& source_id, const MetadataRecord& record);
  void remove(const std::string& source_id, const MetadataRecord& record);
  std::set<EntryPath> lookup(const std::string& source_id, std::size_t depth, const std::string& attribute,
                             const AttributeValue& literal) const;
  std::size_t postings() const noexcept;

  bool operator==(const MetadataIndex&) const = default;

 private:
  using Postings = std::map<AttributeValue, std::set<EntryPath>>;
  std::map<std::pair<std::string, std::size_t>, std::map<std::string, Postings>> data_;
};

struct QueryRow {
  std::string source_id;
  MetadataRecord record;

  auto operator<=>(const QueryRow& o) const {
    if (auto c = source_id <=> o.source_id; c != 0) return c;
    return record.path <=> o.record.path;
  }
  bool operator==(const QueryRow&) const = default;
};

struct QueryOutcome {
  std::vector<QueryRow> rows;
  bool complete = false;
  bool blob_refs_resolved = true;

  /// False where the pseudocode's repository query yields NULL.
  bool answers(const UserQuery& q) const noexcept { return complete && (!q.include_binary || blob_refs_resolved); }

  bool operator==(const QueryOutcome&) const = default;
};

struct GcResult {
  std::size_t entries_removed = 0;
  std::size_t blobs_removed = 0;

  std::size_t total() const noexcept { return entries_removed + blobs_removed; }
};

enum class PromotePolicy {
  /// Newer last_modified wins; ties go to the larger record hash.
  LastWriterWins,
  /// Replace whatever is stored (refresh after corruption).
  Overwrite,
};

class Repository {
 public:
  /// Volatile repository with in-memory blobs and no journal.
  Repository();
  /// Persistent repository: blobs under `root/blobs`, mutations appended to
  /// `journal` (which may be shared with other components).
  Repository(const std::filesystem::path& root, Journal* journal);

  Repository(const Repository&) = delete;
  Repository& operator=(const Repository&) = delete;

  void set_schema(const std::string& source_id, GranularitySchema schema);
  std::optional<GranularitySchema> schema(const std::string& source_id) const;

  /// Stores a proxy unless an entry exists. Returns whether state changed.
  bool put_proxy(const std::string& source_id, const EntryPath& path, Timestamp discovered_at = now());
  /// Makes the entry Full. Throws InvalidRecord. Returns whether state changed.
  bool promote(const std::string& source_id, MetadataRecord record,
               PromotePolicy policy = PromotePolicy::LastWriterWins);

  std::string put_blob(std::span<const std::byte> bytes) { return blobs_.put(bytes); }
  Bytes get_blob(const std::string& hash) const { return blobs_.get(hash); }
  bool has_blob(const std::string& hash) const { return blobs_.contains(hash); }

  /// Local execution of `q` over the coverage of `scope`, with completeness
  /// computed against the same snapshot as the rows.
  QueryOutcome query(const UserQuery& q, std::span<const VirtualReplica> scope) const;
  QueryOutcome query(const UserQuery& q, const ReplicaSet& scope) const { return query(q, scope.replicas); }
  /// True if every replica's subtree has been enumerated into the repository.
  bool proxy_coverage(std::span<const VirtualReplica> scope) const;

  /// Removes entries outside every referenced prefix (ancestors of a prefix
  /// are kept) and blobs no remaining record points at.
  GcResult gc_orphans(const std::set<VirtualReplica>& referenced);

  std::optional<RepoEntry> entry(const std::string& source_id, const EntryPath& path) const;
  std::vector<RepoEntry> entries() const;
  /// Entries inside `vr`'s subtree plus stored ancestors of `vr.path`.
  std::vector<std::pair<EntryPath, Marker>> markers_for(const VirtualReplica& vr) const;
  std::vector<MetadataRecord> full_records_under(const VirtualReplica& vr) const;

  MetadataIndex index() const;
  std::size_t size() const;
  const BlobStore& blobs() const noexcept { return blobs_; }
  BlobStore& blobs() noexcept { return blobs_; }

  /// Applies a journal record during replay; returns false for foreign tags.
  bool apply(const JournalRecord& rec);

 private:
  using Key = std::pair<std::string, EntryPath>;
  using EntryMap = std::map<Key, RepoEntry>;

  template <typename Fn>
  void for_subtree(const VirtualReplica& vr, Fn&& fn) const;

  void set_full_locked(const std::string& source_id, MetadataRecord record);
  void erase_locked(EntryMap::iterator it);

  mutable std::shared_mutex mutex_;
  EntryMap entries_;
  MetadataIndex index_;
  std::map<std::string, GranularitySchema, std::less<>> schemas_;
  BlobStore blobs_;
  Journal* journal_ = nullptr;
};

}  // namespace obidos
