#pragma once

// Selective hybrid loading (the replicaset-driven incremental ETL), the
// per-replica load procedure, refresh, and the eager / lazy baselines that
// share the same traffic meters.

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "obidos/error.hpp"
#include "obidos/holder.hpp"
#include "obidos/repository.hpp"
#include "obidos/source.hpp"

namespace obidos {

class SourceRegistry {
 public:
  /// Throws ConfigError on a duplicate source id.
  void add(std::shared_ptr<Source> source);
  /// Throws UnknownSource.
  std::shared_ptr<Source> get(const std::string& source_id) const;
  bool contains(const std::string& source_id) const;
  std::vector<std::string> ids() const;
  /// Sum of every source's counters.
  TransferStats stats() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Source>, std::less<>> sources_;
};

enum class EtlMode { Hybrid, Eager, Lazy };

std::string_view to_string(EtlMode mode) noexcept;

struct LoadReport {
  std::map<std::string, TransferStats> transfer;
  std::size_t proxies_created = 0;
  std::size_t records_promoted = 0;
  std::size_t blobs_loaded = 0;
  std::size_t query_rows = 0;
  bool served_from_repository = false;
  std::chrono::nanoseconds elapsed{0};

  TransferStats total() const;
  LoadReport& operator+=(const LoadReport& other);
};

/// A source failed mid-load. Work already done stays in the repository.
class LoadAborted : public Error {
 public:
  LoadAborted(const Error& cause, LoadReport partial)
      : Error(cause.code(), std::string("load aborted: ") + cause.what()), partial_(std::move(partial)) {}

  const LoadReport& partial() const noexcept { return partial_; }

 private:
  LoadReport partial_;
};

struct LoadResult {
  LoadReport report;
  QueryOutcome outcome;
};

/// One step of selective_load, recorded for conformance checks.
struct TraceEvent {
  enum class Kind { HolderGet, LoadData, HolderPut, RepositoryQuery };

  Kind kind;
  /// Unset for RepositoryQuery.
  std::optional<VirtualReplica> replica;
  /// HolderGet: was loaded before. RepositoryQuery: repository answered.
  bool result = false;

  bool operator==(const TraceEvent&) const = default;
};

std::string to_string(const TraceEvent& event);

struct LoadOptions {
  /// Reload every replica when the final repository answer is still NULL.
  /// This is outside the pseudocode and off by default.
  bool force_load = false;
};

class Engine {
 public:
  Engine(SourceRegistry& sources, Repository& repo, ReplicaSetHolder& holder);

  /// Holder-guided incremental load of `rs` for `q` (nullopt = no query, as
  /// when a replicaset is received from another instance).
  LoadResult selective_load(const ReplicaSet& rs, const std::optional<UserQuery>& q, LoadOptions options = {});

  /// Stores proxies for `vr`'s subtree, promotes query hits and their
  /// ancestors, and loads matching leaf blobs when the query asks for them.
  LoadReport load_data(const VirtualReplica& vr, const std::optional<UserQuery>& q);

  /// Re-promotes records under `rs` whose source copy is newer, or equally
  /// old with different content.
  LoadReport refresh(const ReplicaSet& rs);

  /// Repository-only outcome; with no query, completeness is proxy coverage.
  QueryOutcome local_query(const ReplicaSet& rs, const std::optional<UserQuery>& q) const;

  /// Records subsequent selective_load steps into `sink` (nullptr disables).
  void set_trace(std::vector<TraceEvent>* sink);

  SourceRegistry& sources() noexcept { return sources_; }
  Repository& repository() noexcept { return repo_; }
  ReplicaSetHolder& holder() noexcept { return holder_; }

 private:
  class ReplicaGuard;

  void load_into(const VirtualReplica& vr, const std::optional<UserQuery>& q, LoadReport& report);
  void trace(TraceEvent event);

  SourceRegistry& sources_;
  Repository& repo_;
  ReplicaSetHolder& holder_;

  std::mutex trace_mutex_;
  std::vector<TraceEvent>* trace_ = nullptr;

  std::mutex inflight_mutex_;
  std::condition_variable inflight_cv_;
  std::set<VirtualReplica> inflight_;
};

/// Loads every record and blob of every registered source.
LoadReport eager_etl(SourceRegistry& sources, Repository& repo);

/// Metadata-only eager bootstrap; blobs are fetched per query and not kept.
class LazyEtl {
 public:
  LazyEtl(SourceRegistry& sources, Repository& repo) : sources_(sources), repo_(repo) {}

  LoadReport bootstrap();
  /// Answers from the metadata store over `scope` (all sources if empty).
  LoadResult query(const UserQuery& q, std::span<const VirtualReplica> scope = {});

 private:
  SourceRegistry& sources_;
  Repository& repo_;
};

}  // namespace obidos
