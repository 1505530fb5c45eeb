#pragma once

// The replicaset holder: which user owns which replicasets, which sources
// each replicaset touches, per-level maps of what has been loaded for it, and
// the set of virtual replicas already loaded into this instance.

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "obidos/journal.hpp"
#include "obidos/model.hpp"
#include "obidos/repository.hpp"

namespace obidos {

/// Per (replicaset, source): one map per granularity level from path (depth
/// i+1) to its loaded marker, and the presence array over those maps.
struct GranularityMaps {
  std::vector<std::map<EntryPath, Marker>> levels;
  std::vector<bool> presence;

  bool operator==(const GranularityMaps&) const = default;
};

struct ReplicaSetRow {
  ReplicaSet replicaset;
  std::vector<std::string> sources;
  std::map<VirtualReplica, bool> loaded;

  bool fully_loaded() const;
};

class ReplicaSetHolder {
 public:
  using SchemaLookup = std::function<std::optional<GranularitySchema>(const std::string&)>;
  /// Markers currently stored for a replica's subtree and its ancestors.
  using MarkerLookup = std::function<std::vector<std::pair<EntryPath, Marker>>(const VirtualReplica&)>;

  ReplicaSetHolder(SchemaLookup schemas, MarkerLookup markers, Journal* journal = nullptr);

  /// Wires the lookups to a repository.
  explicit ReplicaSetHolder(const Repository& repo, Journal* journal = nullptr);

  ReplicaSetHolder(const ReplicaSetHolder&) = delete;
  ReplicaSetHolder& operator=(const ReplicaSetHolder&) = delete;

  /// True iff exactly this pointer was put before (no prefix inference).
  bool get(const VirtualReplica& vr) const;
  /// Marks `vr` loaded and refreshes the level maps of every replicaset that
  /// covers it.
  void put(const VirtualReplica& vr);
  /// Refreshes level maps for `vr`'s subtree without changing load status.
  void refresh(const VirtualReplica& vr);

  /// Throws DuplicateReplicaSet if the user already holds this id.
  void register_replicaset(const std::string& user, const ReplicaSet& rs);
  /// Replaces the replica list of a registered replicaset (same id).
  void update(const ReplicaSet& rs);
  /// Throws UnknownReplicaSet if the user does not hold the id.
  void unregister(const std::string& user, const ReplicaSetId& id);
  /// Throws UnknownReplicaSet.
  ReplicaSet resolve(const ReplicaSetId& id) const;
  bool contains(const ReplicaSetId& id) const;
  bool holds(const std::string& user, const ReplicaSetId& id) const;
  std::vector<ReplicaSetId> list_user(const std::string& user) const;
  std::optional<ReplicaSetRow> row(const ReplicaSetId& id) const;
  /// Throws UnknownReplicaSet.
  GranularityMaps granularity(const ReplicaSetId& id, const std::string& source_id) const;

  /// Union of every live replicaset's pointers, prefix-normalized.
  std::set<VirtualReplica> referenced_prefixes() const;
  /// Drops load status for pointers no live replicaset covers any more.
  std::size_t forget_unreferenced();
  /// Recomputes every level map from the marker lookup.
  void rebuild_granularity();

  std::set<VirtualReplica> loaded() const;

  /// Applies a journal record during replay; returns false for foreign tags.
  bool apply(const JournalRecord& rec);

 private:
  void register_locked(const std::string& user, const ReplicaSet& rs);
  void unregister_locked(const std::string& user, const ReplicaSetId& id);
  void recompute_locked(const ReplicaSetId& id);
  void refresh_locked(const VirtualReplica& vr);
  std::set<VirtualReplica> referenced_locked() const;

  SchemaLookup schemas_;
  MarkerLookup markers_;
  Journal* journal_;

  mutable std::mutex mutex_;
  std::map<std::string, std::vector<ReplicaSetId>> user_map_;
  std::map<ReplicaSetId, ReplicaSetRow> replicaset_map_;
  std::map<ReplicaSetId, std::size_t> holders_;
  std::map<std::pair<ReplicaSetId, std::string>, GranularityMaps> granularity_;
  std::set<VirtualReplica> loaded_;
};

}  // namespace obidos
