#include "obidos/holder.hpp"

#include <algorithm>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"

namespace obidos {

namespace {

std::vector<std::string> distinct_sources(const ReplicaSet& rs) {
  std::vector<std::string> out;
  for (const auto& vr : rs.replicas) {
    if (std::find(out.begin(), out.end(), vr.source_id) == out.end()) out.push_back(vr.source_id);
  }
  return out;
}

Json replica_body(const VirtualReplica& vr) { return Json{{"replica", to_json(vr)}}; }

}  // namespace

bool ReplicaSetRow::fully_loaded() const {
  return std::all_of(loaded.begin(), loaded.end(), [](const auto& kv) { return kv.second; });
}

ReplicaSetHolder::ReplicaSetHolder(SchemaLookup schemas, MarkerLookup markers, Journal* journal)
    : schemas_(std::move(schemas)), markers_(std::move(markers)), journal_(journal) {}

ReplicaSetHolder::ReplicaSetHolder(const Repository& repo, Journal* journal)
    : ReplicaSetHolder([&repo](const std::string& source) { return repo.schema(source); },
                       [&repo](const VirtualReplica& vr) { return repo.markers_for(vr); }, journal) {}

bool ReplicaSetHolder::get(const VirtualReplica& vr) const {
  std::lock_guard lock(mutex_);
  return loaded_.contains(vr);
}

void ReplicaSetHolder::put(const VirtualReplica& vr) {
  std::lock_guard lock(mutex_);
  if (journal_ && !loaded_.contains(vr)) journal_->append(RecordTag::HolderPut, replica_body(vr));
  loaded_.insert(vr);
  for (auto& [_, row] : replicaset_map_) {
    if (auto it = row.loaded.find(vr); it != row.loaded.end()) it->second = true;
  }
  refresh_locked(vr);
}

void ReplicaSetHolder::refresh(const VirtualReplica& vr) {
  std::lock_guard lock(mutex_);
  refresh_locked(vr);
}

void ReplicaSetHolder::refresh_locked(const VirtualReplica& vr) {
  for (const auto& [id, row] : replicaset_map_) {
    bool overlaps = std::any_of(row.replicaset.replicas.begin(), row.replicaset.replicas.end(),
                                [&](const VirtualReplica& r) {
                                  return r.source_id == vr.source_id &&
                                         (r.path.is_prefix_of(vr.path) || vr.path.is_prefix_of(r.path));
                                });
    if (overlaps) recompute_locked(id);
  }
}

void ReplicaSetHolder::recompute_locked(const ReplicaSetId& id) {
  const ReplicaSetRow& row = replicaset_map_.at(id);
  for (const auto& source : row.sources) {
    auto schema = schemas_(source);
    if (!schema) continue;
    const std::size_t n = schema->size();
    GranularityMaps maps;
    maps.levels.resize(n);
    auto mark = [&](const EntryPath& path, Marker marker) {
      if (path.depth() == 0 || path.depth() > n) return;
      auto [it, inserted] = maps.levels[path.depth() - 1].try_emplace(path, marker);
      if (!inserted && marker == Marker::Full) it->second = Marker::Full;
    };
    for (const auto& vr : row.replicaset.replicas) {
      if (vr.source_id != source) continue;
      for (const auto& [path, marker] : markers_(vr)) {
        mark(path, marker);
        // Ancestors of anything loaded are at least proxies.
        for (std::size_t d = 1; d < path.depth(); ++d) mark(path.prefix(d), Marker::Proxy);
      }
    }
    const auto implied = presence_array(row.replicaset, source, *schema);
    maps.presence.resize(n);
    for (std::size_t i = 0; i < n; ++i) maps.presence[i] = !maps.levels[i].empty() || implied[i];
    granularity_[{id, source}] = std::move(maps);
  }
}

void ReplicaSetHolder::register_replicaset(const std::string& user, const ReplicaSet& rs) {
  std::lock_guard lock(mutex_);
  if (auto u = user_map_.find(user);
      u != user_map_.end() && std::find(u->second.begin(), u->second.end(), rs.id) != u->second.end()) {
    throw Error(ErrorCode::DuplicateReplicaSet, rs.id.str());
  }
  if (journal_) journal_->append(RecordTag::HolderRegister, Json{{"replicaset", to_json(rs)}, {"user", user}});
  register_locked(user, rs);
  recompute_locked(rs.id);
}

void ReplicaSetHolder::register_locked(const std::string& user, const ReplicaSet& rs) {
  auto& ids = user_map_[user];
  if (std::find(ids.begin(), ids.end(), rs.id) != ids.end()) {
    throw Error(ErrorCode::DuplicateReplicaSet, rs.id.str());
  }
  ids.push_back(rs.id);
  if (holders_[rs.id]++ > 0) return;
  ReplicaSetRow row{rs, distinct_sources(rs), {}};
  for (const auto& vr : rs.replicas) row.loaded[vr] = loaded_.contains(vr);
  replicaset_map_.insert_or_assign(rs.id, std::move(row));
}

void ReplicaSetHolder::update(const ReplicaSet& rs) {
  std::lock_guard lock(mutex_);
  auto it = replicaset_map_.find(rs.id);
  if (it == replicaset_map_.end()) throw Error(ErrorCode::UnknownReplicaSet, rs.id.str());
  if (journal_) journal_->append(RecordTag::HolderUpdate, Json{{"replicaset", to_json(rs)}});
  ReplicaSetRow row{rs, distinct_sources(rs), {}};
  for (const auto& vr : rs.replicas) row.loaded[vr] = loaded_.contains(vr);
  for (const auto& source : it->second.sources) granularity_.erase({rs.id, source});
  it->second = std::move(row);
  recompute_locked(rs.id);
}

void ReplicaSetHolder::unregister(const std::string& user, const ReplicaSetId& id) {
  std::lock_guard lock(mutex_);
  auto u = user_map_.find(user);
  if (u == user_map_.end() || std::find(u->second.begin(), u->second.end(), id) == u->second.end()) {
    throw Error(ErrorCode::UnknownReplicaSet, id.str());
  }
  if (journal_) journal_->append(RecordTag::HolderUnregister, Json{{"id", id.str()}, {"user", user}});
  unregister_locked(user, id);
}

void ReplicaSetHolder::unregister_locked(const std::string& user, const ReplicaSetId& id) {
  auto& ids = user_map_.at(user);
  ids.erase(std::find(ids.begin(), ids.end(), id));
  if (ids.empty()) user_map_.erase(user);
  if (--holders_[id] > 0) return;
  holders_.erase(id);
  if (auto row = replicaset_map_.find(id); row != replicaset_map_.end()) {
    for (const auto& source : row->second.sources) granularity_.erase({id, source});
    replicaset_map_.erase(row);
  }
}

ReplicaSet ReplicaSetHolder::resolve(const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  auto it = replicaset_map_.find(id);
  if (it == replicaset_map_.end()) throw Error(ErrorCode::UnknownReplicaSet, id.str());
  return it->second.replicaset;
}

bool ReplicaSetHolder::contains(const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  return replicaset_map_.contains(id);
}

bool ReplicaSetHolder::holds(const std::string& user, const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  auto u = user_map_.find(user);
  return u != user_map_.end() && std::find(u->second.begin(), u->second.end(), id) != u->second.end();
}

std::vector<ReplicaSetId> ReplicaSetHolder::list_user(const std::string& user) const {
  std::lock_guard lock(mutex_);
  auto u = user_map_.find(user);
  return u == user_map_.end() ? std::vector<ReplicaSetId>{} : u->second;
}

std::optional<ReplicaSetRow> ReplicaSetHolder::row(const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  auto it = replicaset_map_.find(id);
  if (it == replicaset_map_.end()) return std::nullopt;
  return it->second;
}

GranularityMaps ReplicaSetHolder::granularity(const ReplicaSetId& id, const std::string& source_id) const {
  std::lock_guard lock(mutex_);
  auto it = granularity_.find({id, source_id});
  if (it == granularity_.end()) {
    throw Error(ErrorCode::UnknownReplicaSet, id.str() + " has no maps for " + source_id);
  }
  return it->second;
}

std::set<VirtualReplica> ReplicaSetHolder::referenced_locked() const {
  std::vector<VirtualReplica> all;
  for (const auto& [_, row] : replicaset_map_) {
    all.insert(all.end(), row.replicaset.replicas.begin(), row.replicaset.replicas.end());
  }
  auto normalized = normalize_replicas(std::move(all));
  return {normalized.begin(), normalized.end()};
}

std::set<VirtualReplica> ReplicaSetHolder::referenced_prefixes() const {
  std::lock_guard lock(mutex_);
  return referenced_locked();
}

std::size_t ReplicaSetHolder::forget_unreferenced() {
  std::lock_guard lock(mutex_);
  const auto refs = referenced_locked();
  std::vector<VirtualReplica> refs_list(refs.begin(), refs.end());
  std::size_t forgotten = 0;
  for (auto it = loaded_.begin(); it != loaded_.end();) {
    if (covers(refs_list, it->source_id, it->path)) {
      ++it;
      continue;
    }
    if (journal_) journal_->append(RecordTag::HolderForget, replica_body(*it));
    it = loaded_.erase(it);
    ++forgotten;
  }
  return forgotten;
}

void ReplicaSetHolder::rebuild_granularity() {
  std::lock_guard lock(mutex_);
  granularity_.clear();
  for (const auto& [id, _] : replicaset_map_) recompute_locked(id);
}

std::set<VirtualReplica> ReplicaSetHolder::loaded() const {
  std::lock_guard lock(mutex_);
  return loaded_;
}

bool ReplicaSetHolder::apply(const JournalRecord& rec) {
  std::lock_guard lock(mutex_);
  switch (rec.tag) {
    case RecordTag::HolderRegister:
      register_locked(rec.body.at("user").get<std::string>(), replicaset_from_json(rec.body.at("replicaset")));
      return true;
    case RecordTag::HolderUpdate: {
      ReplicaSet rs = replicaset_from_json(rec.body.at("replicaset"));
      ReplicaSetRow row{rs, distinct_sources(rs), {}};
      for (const auto& vr : rs.replicas) row.loaded[vr] = loaded_.contains(vr);
      replicaset_map_.insert_or_assign(rs.id, std::move(row));
      return true;
    }
    case RecordTag::HolderUnregister:
      unregister_locked(rec.body.at("user").get<std::string>(),
                        ReplicaSetId::parse(rec.body.at("id").get<std::string>()));
      return true;
    case RecordTag::HolderPut: {
      VirtualReplica vr = replica_from_json(rec.body.at("replica"));
      loaded_.insert(vr);
      for (auto& [_, row] : replicaset_map_) {
        if (auto it = row.loaded.find(vr); it != row.loaded.end()) it->second = true;
      }
      return true;
    }
    case RecordTag::HolderForget:
      loaded_.erase(replica_from_json(rec.body.at("replica")));
      return true;
    default:
      return false;
  }
}

}  // namespace obidos
