#include "obidos/repository.hpp"

#include <mutex>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"

namespace fs = std::filesystem;

namespace obidos {

const EntryPath& RepoEntry::path() const {
  return std::visit([](const auto& v) -> const EntryPath& { return v.path; }, value);
}

// --- MetadataIndex -------------------------------------------------------------

void MetadataIndex::add(const std::string& source_id, const MetadataRecord& record) {
  auto& by_attr = data_[{source_id, record.path.depth()}];
  for (const auto& [name, value] : record.attributes) by_attr[name][value].insert(record.path);
}

void MetadataIndex::remove(const std::string& source_id, const MetadataRecord& record) {
  auto level = data_.find({source_id, record.path.depth()});
  if (level == data_.end()) return;
  for (const auto& [name, value] : record.attributes) {
    auto attr = level->second.find(name);
    if (attr == level->second.end()) continue;
    auto lit = attr->second.find(value);
    if (lit == attr->second.end()) continue;
    lit->second.erase(record.path);
    if (lit->second.empty()) attr->second.erase(lit);
    if (attr->second.empty()) level->second.erase(attr);
  }
  if (level->second.empty()) data_.erase(level);
}

std::set<EntryPath> MetadataIndex::lookup(const std::string& source_id, std::size_t depth,
                                          const std::string& attribute, const AttributeValue& literal) const {
  auto level = data_.find({source_id, depth});
  if (level == data_.end()) return {};
  auto attr = level->second.find(attribute);
  if (attr == level->second.end()) return {};
  auto lit = attr->second.find(literal);
  if (lit == attr->second.end()) return {};
  return lit->second;
}

std::size_t MetadataIndex::postings() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, attrs] : data_) {
    for (const auto& [__, lits] : attrs) {
      for (const auto& [___, paths] : lits) n += paths.size();
    }
  }
  return n;
}

// --- Repository ----------------------------------------------------------------

Repository::Repository() = default;

Repository::Repository(const fs::path& root, Journal* journal) : blobs_(root / "blobs"), journal_(journal) {}

void Repository::set_schema(const std::string& source_id, GranularitySchema schema) {
  std::unique_lock lock(mutex_);
  schemas_[source_id] = std::move(schema);
}

std::optional<GranularitySchema> Repository::schema(const std::string& source_id) const {
  std::shared_lock lock(mutex_);
  auto it = schemas_.find(source_id);
  if (it == schemas_.end()) return std::nullopt;
  return it->second;
}

template <typename Fn>
void Repository::for_subtree(const VirtualReplica& vr, Fn&& fn) const {
  for (auto it = entries_.lower_bound(Key{vr.source_id, vr.path});
       it != entries_.end() && it->first.first == vr.source_id && vr.path.is_prefix_of(it->first.second); ++it) {
    fn(it->second);
  }
}

bool Repository::put_proxy(const std::string& source_id, const EntryPath& path, Timestamp discovered_at) {
  if (path.empty()) throw Error(ErrorCode::InvalidPath, "cannot store the source root");
  std::unique_lock lock(mutex_);
  if (auto s = schemas_.find(source_id); s != schemas_.end()) path.validate_against(s->second);
  Key key{source_id, path};
  if (entries_.contains(key)) return false;
  entries_.emplace(key, RepoEntry{source_id, VirtualProxy{path, discovered_at}});
  if (journal_) {
    journal_->append(RecordTag::Proxy,
                     Json{{"discovered_at", discovered_at.ms}, {"path", path.str()}, {"source", source_id}});
  }
  return true;
}

void Repository::set_full_locked(const std::string& source_id, MetadataRecord record) {
  Key key{source_id, record.path};
  auto it = entries_.find(key);
  if (it != entries_.end()) {
    if (it->second.is_full()) index_.remove(source_id, it->second.record());
    it->second.value = record;
  } else {
    entries_.emplace(key, RepoEntry{source_id, record});
  }
  index_.add(source_id, record);
}

void Repository::erase_locked(EntryMap::iterator it) {
  if (it->second.is_full()) index_.remove(it->first.first, it->second.record());
  entries_.erase(it);
}

bool Repository::promote(const std::string& source_id, MetadataRecord record, PromotePolicy policy) {
  record.validate();
  std::unique_lock lock(mutex_);
  auto it = entries_.find(Key{source_id, record.path});
  if (it != entries_.end() && it->second.is_full()) {
    const MetadataRecord& old = it->second.record();
    if (!record.blob_ref && old.blob_ref) record.blob_ref = old.blob_ref;
    if (record == old) return false;
    if (policy == PromotePolicy::LastWriterWins) {
      if (record.last_modified < old.last_modified) return false;
      if (record.last_modified == old.last_modified) {
        auto new_hash = record_content_hash(record);
        auto old_hash = record_content_hash(old);
        if (new_hash < old_hash) return false;
        if (new_hash == old_hash && record.blob_ref == old.blob_ref) return false;
      }
    }
  }
  if (journal_) journal_->append(RecordTag::Promote, Json{{"record", to_json(record)}, {"source", source_id}});
  set_full_locked(source_id, std::move(record));
  return true;
}

QueryOutcome Repository::query(const UserQuery& q, std::span<const VirtualReplica> scope) const {
  std::shared_lock lock(mutex_);
  QueryOutcome out;
  out.complete = !scope.empty();

  // Unknown levels are an error even for sources with nothing loaded yet.
  for (const auto& vr : scope) {
    if (auto s = schemas_.find(vr.source_id); s != schemas_.end()) (void)q.target_depth(s->second);
  }

  std::vector<const RepoEntry*> hits;
  for (const auto& vr : scope) {
    auto s = schemas_.find(vr.source_id);
    if (s == schemas_.end()) {
      out.complete = false;
      continue;
    }
    const std::size_t target = q.target_depth(s->second);
    if (vr.path.depth() > target) continue;

    // An equality predicate narrows candidates through the index.
    std::optional<std::set<EntryPath>> candidates;
    for (const auto& p : q.predicates) {
      if (p.op == CompareOp::Eq && std::holds_alternative<std::string>(p.literal)) {
        candidates = index_.lookup(vr.source_id, target, p.attribute, p.literal);
        break;
      }
    }

    bool enumerated = false;
    for_subtree(vr, [&](const RepoEntry& e) {
      const std::size_t depth = e.path().depth();
      if (depth == vr.path.depth() || depth == 1) enumerated = true;
      // Rows come from the target level only, so only it must be Full.
      if (depth != target) return;
      if (!e.is_full()) {
        out.complete = false;
        return;
      }
      if (candidates && !candidates->contains(e.path())) return;
      if (q.matches(e.record())) hits.push_back(&e);
    });
    if (!enumerated) out.complete = false;
  }

  if (q.include_binary) {
    for (const RepoEntry* hit : hits) {
      const auto& schema = schemas_.at(hit->source_id);
      bool any_leaf = false;
      for_subtree(VirtualReplica{hit->source_id, hit->path()}, [&](const RepoEntry& e) {
        if (e.path().depth() != schema.leaf_depth()) return;
        any_leaf = true;
        if (!e.is_full() || !e.record().blob_ref || !blobs_.contains(*e.record().blob_ref)) {
          out.blob_refs_resolved = false;
        }
      });
      if (!any_leaf) out.blob_refs_resolved = false;
    }
  }

  out.rows.reserve(hits.size());
  for (const RepoEntry* hit : hits) out.rows.push_back({hit->source_id, hit->record()});
  return out;
}

bool Repository::proxy_coverage(std::span<const VirtualReplica> scope) const {
  std::shared_lock lock(mutex_);
  if (scope.empty()) return false;
  for (const auto& vr : scope) {
    bool enumerated = false;
    for_subtree(vr, [&](const RepoEntry& e) {
      if (e.path().depth() == vr.path.depth() || e.path().depth() == 1) enumerated = true;
    });
    if (!enumerated) return false;
  }
  return true;
}

GcResult Repository::gc_orphans(const std::set<VirtualReplica>& referenced) {
  std::unique_lock lock(mutex_);
  GcResult result;
  auto live = [&](const Key& key) {
    for (const auto& vr : referenced) {
      if (vr.source_id != key.first) continue;
      if (vr.path.is_prefix_of(key.second) || key.second.is_prefix_of(vr.path)) return true;
    }
    return false;
  };
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (live(it->first)) {
      ++it;
      continue;
    }
    if (journal_) {
      journal_->append(RecordTag::Remove, Json{{"path", it->first.second.str()}, {"source", it->first.first}});
    }
    auto next = std::next(it);
    erase_locked(it);
    it = next;
    ++result.entries_removed;
  }

  std::set<std::string> kept_blobs;
  for (const auto& [_, e] : entries_) {
    if (e.is_full() && e.record().blob_ref) kept_blobs.insert(*e.record().blob_ref);
  }
  for (const auto& hash : blobs_.hashes()) {
    if (!kept_blobs.contains(hash) && blobs_.remove(hash)) ++result.blobs_removed;
  }
  return result;
}

std::optional<RepoEntry> Repository::entry(const std::string& source_id, const EntryPath& path) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(Key{source_id, path});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<RepoEntry> Repository::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<RepoEntry> out;
  out.reserve(entries_.size());
  for (const auto& [_, e] : entries_) out.push_back(e);
  return out;
}

std::vector<std::pair<EntryPath, Marker>> Repository::markers_for(const VirtualReplica& vr) const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<EntryPath, Marker>> out;
  for (std::size_t d = 1; d < vr.path.depth(); ++d) {
    auto it = entries_.find(Key{vr.source_id, vr.path.prefix(d)});
    if (it != entries_.end()) out.emplace_back(it->second.path(), it->second.marker());
  }
  for_subtree(vr, [&](const RepoEntry& e) { out.emplace_back(e.path(), e.marker()); });
  return out;
}

std::vector<MetadataRecord> Repository::full_records_under(const VirtualReplica& vr) const {
  std::shared_lock lock(mutex_);
  std::vector<MetadataRecord> out;
  for_subtree(vr, [&](const RepoEntry& e) {
    if (e.is_full()) out.push_back(e.record());
  });
  return out;
}

MetadataIndex Repository::index() const {
  std::shared_lock lock(mutex_);
  return index_;
}

std::size_t Repository::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool Repository::apply(const JournalRecord& rec) {
  std::unique_lock lock(mutex_);
  switch (rec.tag) {
    case RecordTag::Proxy: {
      Key key{rec.body.at("source").get<std::string>(), EntryPath::parse(rec.body.at("path").get<std::string>())};
      if (!entries_.contains(key)) {
        entries_.emplace(key, RepoEntry{key.first, VirtualProxy{key.second, Timestamp{rec.body.at("discovered_at").get<std::int64_t>()}}});
      }
      return true;
    }
    case RecordTag::Promote:
      set_full_locked(rec.body.at("source").get<std::string>(), record_from_json(rec.body.at("record")));
      return true;
    case RecordTag::Remove: {
      auto it = entries_.find(
          Key{rec.body.at("source").get<std::string>(), EntryPath::parse(rec.body.at("path").get<std::string>())});
      if (it != entries_.end()) erase_locked(it);
      return true;
    }
    default:
      return false;
  }
}

}  // namespace obidos
