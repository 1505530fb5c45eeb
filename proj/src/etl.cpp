#include "obidos/etl.hpp"

#include <algorithm>

namespace obidos {

// --- SourceRegistry ------------------------------------------------------------

void SourceRegistry::add(std::shared_ptr<Source> source) {
  std::lock_guard lock(mutex_);
  const std::string id = source->id();
  if (!sources_.emplace(id, std::move(source)).second) {
    throw Error(ErrorCode::ConfigError, "duplicate source id " + id);
  }
}

std::shared_ptr<Source> SourceRegistry::get(const std::string& source_id) const {
  std::lock_guard lock(mutex_);
  auto it = sources_.find(source_id);
  if (it == sources_.end()) throw Error(ErrorCode::UnknownSource, source_id);
  return it->second;
}

bool SourceRegistry::contains(const std::string& source_id) const {
  std::lock_guard lock(mutex_);
  return sources_.contains(source_id);
}

std::vector<std::string> SourceRegistry::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sources_) out.push_back(id);
  return out;
}

TransferStats SourceRegistry::stats() const {
  std::lock_guard lock(mutex_);
  TransferStats total;
  for (const auto& [_, s] : sources_) total += s->stats();
  return total;
}

// --- reports and traces --------------------------------------------------------

std::string_view to_string(EtlMode mode) noexcept {
  switch (mode) {
    case EtlMode::Hybrid: return "hybrid";
    case EtlMode::Eager: return "eager";
    case EtlMode::Lazy: return "lazy";
  }
  return "?";
}

TransferStats LoadReport::total() const {
  TransferStats sum;
  for (const auto& [_, t] : transfer) sum += t;
  return sum;
}

LoadReport& LoadReport::operator+=(const LoadReport& other) {
  for (const auto& [id, t] : other.transfer) transfer[id] += t;
  proxies_created += other.proxies_created;
  records_promoted += other.records_promoted;
  blobs_loaded += other.blobs_loaded;
  query_rows += other.query_rows;
  elapsed += other.elapsed;
  return *this;
}

std::string to_string(const TraceEvent& event) {
  std::string out;
  switch (event.kind) {
    case TraceEvent::Kind::HolderGet: out = "get"; break;
    case TraceEvent::Kind::LoadData: out = "loadData"; break;
    case TraceEvent::Kind::HolderPut: out = "put"; break;
    case TraceEvent::Kind::RepositoryQuery: out = "repoQuery"; break;
  }
  out += "(";
  if (event.replica) out += to_string(*event.replica);
  out += ")";
  if (event.kind == TraceEvent::Kind::HolderGet || event.kind == TraceEvent::Kind::RepositoryQuery) {
    out += event.result ? "=true" : "=false";
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

/// Charges the delta of a source's counters to a report, also on unwind.
class TransferScope {
 public:
  TransferScope(const Source& source, LoadReport& report)
      : source_(source), report_(report), before_(source.stats()) {}
  ~TransferScope() { report_.transfer[source_.id()] += source_.stats() - before_; }

 private:
  const Source& source_;
  LoadReport& report_;
  TransferStats before_;
};

}  // namespace

// --- Engine --------------------------------------------------------------------

class Engine::ReplicaGuard {
 public:
  ReplicaGuard(Engine& engine, const VirtualReplica& vr) : engine_(engine), vr_(vr) {
    std::unique_lock lock(engine_.inflight_mutex_);
    engine_.inflight_cv_.wait(lock, [&] { return !engine_.inflight_.contains(vr_); });
    engine_.inflight_.insert(vr_);
  }
  ~ReplicaGuard() {
    {
      std::lock_guard lock(engine_.inflight_mutex_);
      engine_.inflight_.erase(vr_);
    }
    engine_.inflight_cv_.notify_all();
  }
  ReplicaGuard(const ReplicaGuard&) = delete;
  ReplicaGuard& operator=(const ReplicaGuard&) = delete;

 private:
  Engine& engine_;
  VirtualReplica vr_;
};

Engine::Engine(SourceRegistry& sources, Repository& repo, ReplicaSetHolder& holder)
    : sources_(sources), repo_(repo), holder_(holder) {}

void Engine::set_trace(std::vector<TraceEvent>* sink) {
  std::lock_guard lock(trace_mutex_);
  trace_ = sink;
}

void Engine::trace(TraceEvent event) {
  std::lock_guard lock(trace_mutex_);
  if (trace_) trace_->push_back(std::move(event));
}

QueryOutcome Engine::local_query(const ReplicaSet& rs, const std::optional<UserQuery>& q) const {
  if (q) return repo_.query(*q, rs);
  QueryOutcome out;
  out.complete = repo_.proxy_coverage(rs.replicas);
  return out;
}

LoadResult Engine::selective_load(const ReplicaSet& rs, const std::optional<UserQuery>& q, LoadOptions options) {
  const auto start = Clock::now();
  LoadResult result;
  LoadReport& report = result.report;
  bool loaded_anything = false;

  auto answered = [&](const QueryOutcome& outcome) { return q ? outcome.answers(*q) : outcome.complete; };
  auto run_load = [&](const VirtualReplica& vr) {
    trace({TraceEvent::Kind::LoadData, vr, false});
    loaded_anything = true;
    load_into(vr, q, report);
  };

  for (const auto& vr : rs.replicas) {
    auto source = sources_.get(vr.source_id);
    if (!repo_.schema(vr.source_id)) repo_.set_schema(vr.source_id, source->schema());
    if (q) (void)q->target_depth(source->schema());
  }

  try {
    std::vector<VirtualReplica> to_load = rs.replicas;
    for (const auto& vr : rs.replicas) {
      ReplicaGuard guard(*this, vr);
      const bool was_loaded_before = holder_.get(vr);
      trace({TraceEvent::Kind::HolderGet, vr, was_loaded_before});
      if (!was_loaded_before) {
        run_load(vr);
        holder_.put(vr);
        trace({TraceEvent::Kind::HolderPut, vr, false});
        std::erase(to_load, vr);
      }
    }

    if (!to_load.empty()) {
      const bool repo_answers = answered(local_query(rs, q));
      trace({TraceEvent::Kind::RepositoryQuery, std::nullopt, repo_answers});
      if (!repo_answers) {
        for (const auto& vr : to_load) {
          ReplicaGuard guard(*this, vr);
          run_load(vr);
          holder_.refresh(vr);
        }
      }
    }

    result.outcome = local_query(rs, q);
    if (options.force_load && !answered(result.outcome)) {
      for (const auto& vr : rs.replicas) {
        ReplicaGuard guard(*this, vr);
        run_load(vr);
        holder_.refresh(vr);
      }
      result.outcome = local_query(rs, q);
    }
  } catch (const Error& e) {
    report.elapsed = Clock::now() - start;
    throw LoadAborted(e, report);
  }

  report.served_from_repository = !loaded_anything;
  report.query_rows = result.outcome.rows.size();
  report.elapsed = Clock::now() - start;
  return result;
}

LoadReport Engine::load_data(const VirtualReplica& vr, const std::optional<UserQuery>& q) {
  const auto start = Clock::now();
  LoadReport report;
  load_into(vr, q, report);
  report.elapsed = Clock::now() - start;
  return report;
}

void Engine::load_into(const VirtualReplica& vr, const std::optional<UserQuery>& q, LoadReport& report) {
  auto source = sources_.get(vr.source_id);
  const GranularitySchema& schema = source->schema();
  vr.path.validate_against(schema);
  if (!repo_.schema(vr.source_id)) repo_.set_schema(vr.source_id, schema);
  TransferScope meter(*source, report);

  // (a) Mirror the subtree as proxies.
  std::vector<EntryPath> discovered = source->enumerate(vr.path);
  auto proxy = [&](const EntryPath& p) {
    if (repo_.put_proxy(vr.source_id, p)) ++report.proxies_created;
  };
  for (std::size_t d = 1; d <= vr.path.depth(); ++d) proxy(vr.path.prefix(d));
  for (const auto& p : discovered) proxy(p);
  if (!q) return;

  // (b) Run the query at the source; promote hits and their ancestors. The
  // non-matching candidates were fetched too and are kept, so later queries
  // at this level can be answered without going back to the source.
  std::vector<MetadataRecord> hits;
  std::set<EntryPath> promoted;
  auto promote = [&](MetadataRecord record) {
    promoted.insert(record.path);
    if (repo_.promote(vr.source_id, std::move(record))) ++report.records_promoted;
  };
  for (auto& record : source->examine(vr, *q)) {
    if (q->matches(record)) hits.push_back(record);
    promote(std::move(record));
  }
  for (const auto& hit : hits) {
    for (std::size_t d = 1; d < hit.path.depth(); ++d) {
      EntryPath ancestor = hit.path.prefix(d);
      if (promoted.contains(ancestor)) continue;
      if (auto e = repo_.entry(vr.source_id, ancestor); e && e->is_full()) continue;
      promote(source->fetch_metadata(ancestor));
    }
  }
  if (!q->include_binary) return;

  // (c) Binary payloads of the matching leaves.
  std::sort(discovered.begin(), discovered.end());
  std::vector<EntryPath> leaves;
  for (const auto& hit : hits) {
    if (hit.path.depth() == schema.leaf_depth()) {
      leaves.push_back(hit.path);
      continue;
    }
    for (auto it = std::lower_bound(discovered.begin(), discovered.end(), hit.path);
         it != discovered.end() && hit.path.is_prefix_of(*it); ++it) {
      if (it->depth() == schema.leaf_depth()) leaves.push_back(*it);
    }
  }
  for (const auto& leaf : leaves) {
    auto existing = repo_.entry(vr.source_id, leaf);
    if (existing && existing->is_full() && existing->record().blob_ref &&
        repo_.has_blob(*existing->record().blob_ref)) {
      continue;
    }
    MetadataRecord record = existing && existing->is_full() ? existing->record() : source->fetch_metadata(leaf);
    Blob blob = source->fetch_blob(leaf);
    record.blob_ref = repo_.put_blob(blob.bytes);
    ++report.blobs_loaded;
    promote(std::move(record));
  }
}

LoadReport Engine::refresh(const ReplicaSet& rs) {
  const auto start = Clock::now();
  LoadReport report;
  for (const auto& vr : rs.replicas) {
    auto source = sources_.get(vr.source_id);
    TransferScope meter(*source, report);
    for (const auto& local : repo_.full_records_under(vr)) {
      MetadataRecord remote = source->fetch_metadata(local.path);
      bool changed = false;
      if (remote.last_modified > local.last_modified) {
        changed = repo_.promote(vr.source_id, std::move(remote));
      } else if (remote.last_modified == local.last_modified &&
                 record_content_hash(remote) != record_content_hash(local)) {
        changed = repo_.promote(vr.source_id, std::move(remote), PromotePolicy::Overwrite);
      }
      if (changed) ++report.records_promoted;
    }
    holder_.refresh(vr);
  }
  report.elapsed = Clock::now() - start;
  return report;
}

// --- Baselines -----------------------------------------------------------------

LoadReport eager_etl(SourceRegistry& sources, Repository& repo) {
  const auto start = Clock::now();
  LoadReport report;
  for (const auto& id : sources.ids()) {
    auto source = sources.get(id);
    repo.set_schema(id, source->schema());
    TransferScope meter(*source, report);
    const std::size_t leaf_depth = source->schema().leaf_depth();
    for (const auto& path : source->enumerate(EntryPath{})) {
      MetadataRecord record = source->fetch_metadata(path);
      if (path.depth() == leaf_depth) {
        Blob blob = source->fetch_blob(path);
        record.blob_ref = repo.put_blob(blob.bytes);
        ++report.blobs_loaded;
      }
      if (repo.promote(id, std::move(record))) ++report.records_promoted;
    }
  }
  report.elapsed = Clock::now() - start;
  return report;
}

LoadReport LazyEtl::bootstrap() {
  const auto start = Clock::now();
  LoadReport report;
  for (const auto& id : sources_.ids()) {
    auto source = sources_.get(id);
    repo_.set_schema(id, source->schema());
    TransferScope meter(*source, report);
    for (const auto& path : source->enumerate(EntryPath{})) {
      if (repo_.promote(id, source->fetch_metadata(path))) ++report.records_promoted;
    }
  }
  report.elapsed = Clock::now() - start;
  return report;
}

LoadResult LazyEtl::query(const UserQuery& q, std::span<const VirtualReplica> scope) {
  const auto start = Clock::now();
  std::vector<VirtualReplica> all;
  if (scope.empty()) {
    for (const auto& id : sources_.ids()) all.push_back({id, EntryPath{}});
    scope = all;
  }
  LoadResult result;
  result.outcome = repo_.query(q, scope);
  if (q.include_binary) {
    // Fetched on demand and dropped: nothing is retained between queries.
    for (const auto& row : result.outcome.rows) {
      auto source = sources_.get(row.source_id);
      TransferScope meter(*source, result.report);
      const std::size_t leaf_depth = source->schema().leaf_depth();
      for (const auto& rec : repo_.full_records_under({row.source_id, row.record.path})) {
        if (rec.path.depth() == leaf_depth) (void)source->fetch_blob(rec.path);
      }
    }
    result.outcome.blob_refs_resolved = true;
  }
  result.report.served_from_repository = result.report.total().zero();
  result.report.query_rows = result.outcome.rows.size();
  result.report.elapsed = Clock::now() - start;
  return result;
}

}  // namespace obidos
