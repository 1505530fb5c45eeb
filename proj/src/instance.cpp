#include "obidos/instance.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"

namespace fs = std::filesystem;

namespace obidos {

// --- configuration -------------------------------------------------------------

std::string InstanceConfig::uri() const {
  if (!public_uri.empty()) return public_uri;
  return "http://" + host + ":" + std::to_string(port);
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

RemoteProfile profile_from_json(const Json& j, RemoteProfile profile) {
  if (j.contains("request_latency_ms")) {
    profile.per_request_latency = std::chrono::milliseconds(j.at("request_latency_ms").get<std::int64_t>());
  }
  if (j.contains("byte_latency_ns")) profile.per_byte_latency = std::chrono::nanoseconds(j.at("byte_latency_ns").get<std::int64_t>());
  return profile;
}

}  // namespace

InstanceConfig InstanceConfig::from_json(const Json& j, const fs::path& base_dir) {
  try {
    InstanceConfig c;
    c.instance_id = j.value("instance_id", c.instance_id);
    if (j.contains("listen")) {
      const Json& listen = j.at("listen");
      c.host = listen.value("host", c.host);
      c.port = listen.value("port", c.port);
    }
    c.public_uri = j.value("public_uri", std::string{});
    if (j.contains("repository")) c.repository_root = resolve(base_dir, j.at("repository").get<std::string>());
    if (j.contains("remote_defaults")) c.remote_defaults = profile_from_json(j.at("remote_defaults"), c.remote_defaults);
    for (const Json& s : j.value("sources", Json::array())) {
      SourceConfig sc;
      sc.root = resolve(base_dir, s.at("root").get<std::string>());
      if (s.contains("remote")) {
        const Json& r = s.at("remote");
        if (r.is_boolean()) {
          if (r.get<bool>()) sc.remote = c.remote_defaults;
        } else {
          sc.remote = profile_from_json(r, c.remote_defaults);
        }
      }
      c.sources.push_back(std::move(sc));
    }
    for (const Json& k : j.value("api_keys", Json::array())) c.api_keys.push_back(api_key_from_json(k));
    if (j.contains("grant_ttl_s")) c.grant_ttl = std::chrono::seconds(j.at("grant_ttl_s").get<std::int64_t>());
    if (c.instance_id.empty()) throw Error(ErrorCode::ConfigError, "instance_id is empty");
    return c;
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad configuration: ") + e.what());
  }
}

InstanceConfig InstanceConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read configuration " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_json(parse_json(text), file.parent_path());
  } catch (const DeserializeError& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

// --- instance ------------------------------------------------------------------

Instance::Instance(InstanceConfig config, SenderConnector connect)
    : config_(std::move(config)),
      journal_(config_.repository_root ? std::make_unique<Journal>(*config_.repository_root / "journal.log") : nullptr),
      repo_(config_.repository_root ? std::make_unique<Repository>(*config_.repository_root, journal_.get())
                                    : std::make_unique<Repository>()),
      holder_(std::make_unique<ReplicaSetHolder>(*repo_, journal_.get())),
      engine_(std::make_unique<Engine>(sources_, *repo_, *holder_)),
      keys_(journal_.get()),
      sharing_(std::make_unique<SharingService>(*engine_, std::move(connect), journal_.get())) {
  for (const auto& sc : config_.sources) {
    std::shared_ptr<Source> source = std::make_shared<FilesystemSource>(sc.root);
    if (sc.remote) source = std::make_shared<RemoteSource>(std::move(source), *sc.remote);
    repo_->set_schema(source->id(), source->schema());
    sources_.add(std::move(source));
  }
  for (const auto& key : config_.api_keys) keys_.add(key);
  replay();
}

void Instance::replay() {
  if (!journal_) return;
  journal_->replay([&](const JournalRecord& rec) {
    if (repo_->apply(rec) || holder_->apply(rec) || keys_.apply(rec) || sharing_->apply(rec)) return;
    if (rec.tag == RecordTag::SavedQuery) {
      auto id = ReplicaSetId::parse(rec.body.at("id").get<std::string>());
      if (rec.body.at("query").is_null()) {
        saved_queries_.erase(id);
      } else {
        saved_queries_[id] = query_from_json(rec.body.at("query"));
      }
    }
  });
  holder_->rebuild_granularity();
}

void Instance::check_owner(const std::string& user, const ReplicaSetId& id) const {
  if (!holder_->holds(user, id)) throw Error(ErrorCode::UnknownReplicaSet, "no replicaset " + id.str() + " for " + user);
}

void Instance::check_replicas(std::span<const VirtualReplica> replicas, const std::optional<UserQuery>& q) const {
  for (const auto& vr : replicas) {
    auto source = sources_.get(vr.source_id);
    vr.path.validate_against(source->schema());
    if (q) (void)q->target_depth(source->schema());
  }
}

void Instance::save_query(const ReplicaSetId& id, const std::optional<UserQuery>& q) {
  std::lock_guard lock(mutex_);
  auto it = saved_queries_.find(id);
  if (!q && it == saved_queries_.end()) return;
  if (q && it != saved_queries_.end() && to_json(*q) == to_json(it->second)) return;
  if (journal_) journal_->append(RecordTag::SavedQuery, Json{{"id", id.str()}, {"query", q ? to_json(*q) : Json()}});
  if (q) {
    saved_queries_[id] = *q;
  } else {
    saved_queries_.erase(id);
  }
}

std::optional<UserQuery> Instance::saved_query(const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  auto it = saved_queries_.find(id);
  if (it == saved_queries_.end()) return std::nullopt;
  return it->second;
}

void Instance::mark_loaded(const ReplicaSetId& id) {
  ReplicaSet rs = holder_->resolve(id);
  rs.last_loaded_at = now();
  holder_->update(rs);
}

std::pair<ReplicaSet, LoadResult> Instance::create_replicaset(const std::string& user,
                                                              std::vector<VirtualReplica> replicas,
                                                              const std::optional<UserQuery>& q,
                                                              LoadOptions options,
                                                              std::optional<ReplicaSetId> id) {
  ReplicaSet rs = ReplicaSet::create(user, std::move(replicas));
  // Reject bad input before anything is registered.
  check_replicas(rs.replicas, q);
  if (id) {
    if (holder_->contains(*id) || sharing_->binding(*id)) {
      throw Error(ErrorCode::DuplicateReplicaSet, "replicaset " + id->str() + " already exists");
    }
    rs.id = *id;
  }
  holder_->register_replicaset(user, rs);
  save_query(rs.id, q);
  LoadResult load = engine_->selective_load(rs, q, options);
  mark_loaded(rs.id);
  return {holder_->resolve(rs.id), std::move(load)};
}

ReplicaSetView Instance::retrieve_replicaset(const std::string& user, const ReplicaSetId& id, bool refresh) {
  check_owner(user, id);
  ReplicaSetView view;
  view.replicaset = holder_->resolve(id);
  auto row = holder_->row(id);
  view.loaded = row && row->fully_loaded();
  if (refresh && view.loaded) view.refresh = engine_->refresh(view.replicaset);
  view.query = saved_query(id);
  view.outcome = engine_->local_query(view.replicaset, view.query);
  return view;
}

UpdateResult Instance::update_replicaset(const std::string& user, const ReplicaSetId& id,
                                         std::vector<VirtualReplica> replicas) {
  check_owner(user, id);
  ReplicaSet old = holder_->resolve(id);
  ReplicaSet next = old;
  next.replicas = std::move(replicas);
  next = normalize(std::move(next));
  check_replicas(next.replicas);

  UpdateResult result;
  std::set_difference(next.replicas.begin(), next.replicas.end(), old.replicas.begin(), old.replicas.end(),
                      std::back_inserter(result.added));
  std::set_difference(old.replicas.begin(), old.replicas.end(), next.replicas.begin(), next.replicas.end(),
                      std::back_inserter(result.removed));
  holder_->update(next);
  // Removed pointers stay in the repository until the next gc.
  result.load = engine_->selective_load(next, saved_query(id));
  mark_loaded(id);
  result.replicaset = holder_->resolve(id);
  return result;
}

void Instance::delete_replicaset(const std::string& user, const ReplicaSetId& id) {
  holder_->unregister(user, id);
  if (!holder_->contains(id)) save_query(id, std::nullopt);
}

QueryResult Instance::query(const std::string& user, const ReplicaSetId& id, const UserQuery& q,
                            LoadOptions options) {
  QueryResult result;
  if (holder_->holds(user, id)) {
    ReplicaSet rs = holder_->resolve(id);
    save_query(id, q);
    result.load = engine_->selective_load(rs, q, options);
    if (!result.load.report.served_from_repository) mark_loaded(id);
    return result;
  }
  auto binding = sharing_->binding(id);
  if (!binding || binding->user != user) {
    throw Error(ErrorCode::UnknownReplicaSet, "no replicaset " + id.str() + " for " + user);
  }
  auto start = std::chrono::steady_clock::now();
  result.load.outcome = sharing_->remote_query(id, q);
  result.load.report.query_rows = result.load.outcome.rows.size();
  result.load.report.served_from_repository = true;
  result.load.report.elapsed = std::chrono::steady_clock::now() - start;
  result.remote = true;
  return result;
}

LoadResult Instance::materialize_binding(const std::string& user, const ReplicaSetId& id) {
  auto binding = sharing_->binding(id);
  if (!binding || binding->user != user) {
    throw Error(ErrorCode::UnknownReplicaSet, "no remote binding " + id.str() + " for " + user);
  }
  if (!holder_->holds(user, id)) holder_->register_replicaset(user, binding->replicaset);
  LoadResult load = engine_->selective_load(binding->replicaset, std::nullopt);
  mark_loaded(id);
  return load;
}

GcResult Instance::gc() {
  GcResult result = repo_->gc_orphans(holder_->referenced_prefixes());
  holder_->forget_unreferenced();
  holder_->rebuild_granularity();
  return result;
}

AccessGrant Instance::issue_grant(const std::string& user, const ReplicaSetId& id) {
  check_owner(user, id);
  ApiKey key = keys_.issue(user, id, config_.grant_ttl);
  return AccessGrant{key.token, uri(), *key.expiry};
}

ShareEnvelope Instance::make_envelope(const std::string& user, const ReplicaSetId& id, EnvelopeKind kind,
                                      const std::string& receiver_user, bool with_access) {
  check_owner(user, id);
  ShareEnvelope envelope;
  envelope.sender_instance = config_.instance_id;
  envelope.receiver_user = receiver_user;
  if (kind == EnvelopeKind::IdOnly) {
    envelope.body = ShareEnvelope::IdOnly{id, uri(), keys_.issue(user, id, config_.grant_ttl).token};
  } else {
    envelope.body = holder_->resolve(id);
  }
  if (with_access) envelope.access_sender = issue_grant(user, id);
  return envelope;
}

bool Instance::allowed(const ApiKey& key, const ReplicaSetId& id) const {
  if (key.owner) return holder_->holds(key.user, id);
  return key.scope.contains(id);
}

ReplicaSet Instance::sender_get(const ReplicaSetId& id, const std::string& token) {
  auto key = keys_.authenticate(token);
  if (!key) throw Error(ErrorCode::AccessDenied, "invalid or expired key");
  if (!allowed(*key, id)) {
    // Other users' replicasets are invisible to owner keys.
    if (key->owner) throw Error(ErrorCode::UnknownReplicaSet, "unknown replicaset " + id.str());
    throw Error(ErrorCode::AccessDenied, "key is not scoped to " + id.str());
  }
  if (!holder_->contains(id)) throw Error(ErrorCode::UnknownReplicaSet, "unknown replicaset " + id.str());
  return holder_->resolve(id);
}

QueryOutcome Instance::sender_query(const ReplicaSetId& id, const UserQuery& q, const std::string& token) {
  ReplicaSet rs = sender_get(id, token);
  QueryOutcome out = repo_->query(q, rs);
  std::erase_if(out.rows, [&](const QueryRow& row) { return !covers(rs, row.source_id, row.record.path); });
  return out;
}

// --- in-process senders --------------------------------------------------------

namespace {

class InProcessSender final : public SenderClient {
 public:
  explicit InProcessSender(Instance& instance) : instance_(instance) {}

  ReplicaSet get_replicaset(const ReplicaSetId& id, const std::string& api_key) override {
    return instance_.sender_get(id, api_key);
  }
  QueryOutcome query(const ReplicaSetId& id, const UserQuery& q, const std::string& api_key) override {
    return instance_.sender_query(id, q, api_key);
  }

 private:
  Instance& instance_;
};

}  // namespace

SenderConnector in_process_connector(std::map<std::string, Instance*> instances) {
  return [instances = std::move(instances)](const std::string& uri) -> std::shared_ptr<SenderClient> {
    auto it = instances.find(uri);
    if (it == instances.end() || !it->second) throw Error(ErrorCode::SenderUnavailable, "no instance at " + uri);
    return std::make_shared<InProcessSender>(*it->second);
  };
}

}  // namespace obidos
