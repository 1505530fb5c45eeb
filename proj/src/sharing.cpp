#include "obidos/sharing.hpp"

#include <algorithm>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace obidos {

ReplicaSetId ShareEnvelope::replicaset_id() const {
  if (const auto* ref = std::get_if<IdOnly>(&body)) return ref->replicaset_id;
  return std::get<ReplicaSet>(body).id;
}

Json to_json(const AccessGrant& grant) {
  return Json{{"api_key", grant.api_key}, {"expiry", grant.expiry.ms}, {"sender_repo_uri", grant.sender_repo_uri}};
}

AccessGrant grant_from_json(const Json& j) {
  return AccessGrant{j.at("api_key").get<std::string>(), j.at("sender_repo_uri").get<std::string>(),
                     Timestamp{j.at("expiry").get<std::int64_t>()}};
}

namespace {

Json envelope_json(const ShareEnvelope& e) {
  Json j{{"receiver_user", e.receiver_user}, {"sender_instance", e.sender_instance}};
  if (const auto* ref = std::get_if<ShareEnvelope::IdOnly>(&e.body)) {
    j["kind"] = "id";
    j["replicaset_id"] = ref->replicaset_id.str();
    j["sender_uri"] = ref->sender_uri;
    j["fetch_key"] = ref->fetch_key;
  } else {
    j["kind"] = "full";
    j["replicaset"] = to_json(std::get<ReplicaSet>(e.body));
  }
  if (e.access_sender) j["access"] = to_json(*e.access_sender);
  return j;
}

}  // namespace

std::string serialize_envelope(const ShareEnvelope& envelope) { return canonical(envelope_json(envelope)); }

ShareEnvelope deserialize_envelope(std::string_view bytes) {
  Json j = parse_json(bytes);
  try {
    ShareEnvelope e;
    e.receiver_user = j.at("receiver_user").get<std::string>();
    e.sender_instance = j.at("sender_instance").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "id") {
      e.body = ShareEnvelope::IdOnly{ReplicaSetId::parse(j.at("replicaset_id").get<std::string>()),
                                     j.at("sender_uri").get<std::string>(), j.at("fetch_key").get<std::string>()};
    } else if (kind == "full") {
      ReplicaSet rs = replicaset_from_json(j.at("replicaset"));
      if (rs.replicas.empty()) throw DeserializeError(0, "shared replicaset has no replicas");
      e.body = std::move(rs);
    } else {
      throw DeserializeError(0, "unknown envelope kind '" + kind + "'");
    }
    if (j.contains("access")) e.access_sender = grant_from_json(j.at("access"));
    return e;
  } catch (const DeserializeError&) {
    throw;
  } catch (const Error& err) {
    throw DeserializeError(0, err.what());
  } catch (const Json::exception& err) {
    throw DeserializeError(0, err.what());
  }
}

std::size_t measure_share_size(const ShareEnvelope& envelope) { return serialize_envelope(envelope).size(); }

// --- keys ----------------------------------------------------------------------

Json to_json(const ApiKey& key) {
  Json scope = Json::array();
  for (const auto& id : key.scope) scope.push_back(id.str());
  Json j{{"owner", key.owner}, {"scope", std::move(scope)}, {"token", key.token}, {"user", key.user}};
  if (key.expiry) j["expiry"] = key.expiry->ms;
  return j;
}

ApiKey api_key_from_json(const Json& j) {
  ApiKey key;
  key.token = j.at("token").get<std::string>();
  key.user = j.at("user").get<std::string>();
  key.owner = j.value("owner", true);
  if (j.contains("scope")) {
    for (const auto& id : j.at("scope")) key.scope.insert(ReplicaSetId::parse(id.get<std::string>()));
  }
  if (j.contains("expiry")) key.expiry = Timestamp{j.at("expiry").get<std::int64_t>()};
  return key;
}

void KeyRing::add(ApiKey key) {
  if (key.token.empty()) throw Error(ErrorCode::ConfigError, "empty API key");
  std::lock_guard lock(mutex_);
  keys_[key.token] = std::move(key);
}

std::optional<ApiKey> KeyRing::authenticate(std::string_view token, Timestamp at) const {
  std::lock_guard lock(mutex_);
  auto it = keys_.find(token);
  if (it == keys_.end() || it->second.expired(at)) return std::nullopt;
  return it->second;
}

ApiKey KeyRing::issue(const std::string& user, const ReplicaSetId& id, std::chrono::milliseconds ttl) {
  ApiKey key;
  key.token = random_token();
  key.user = user;
  key.owner = false;
  key.scope = {id};
  key.expiry = Timestamp{now().ms + ttl.count()};
  std::lock_guard lock(mutex_);
  if (journal_) journal_->append(RecordTag::Grant, to_json(key));
  keys_[key.token] = key;
  return key;
}

bool KeyRing::revoke(std::string_view token) {
  std::lock_guard lock(mutex_);
  auto it = keys_.find(token);
  if (it == keys_.end()) return false;
  if (journal_) journal_->append(RecordTag::Revoke, Json{{"token", std::string(token)}});
  keys_.erase(it);
  return true;
}

bool KeyRing::apply(const JournalRecord& rec) {
  std::lock_guard lock(mutex_);
  switch (rec.tag) {
    case RecordTag::Grant: {
      ApiKey key = api_key_from_json(rec.body);
      keys_[key.token] = std::move(key);
      return true;
    }
    case RecordTag::Revoke:
      keys_.erase(rec.body.at("token").get<std::string>());
      return true;
    default:
      return false;
  }
}

// --- sharing -------------------------------------------------------------------

std::string_view to_string(SharePath path) noexcept {
  return path == SharePath::RemoteAccess ? "remote-access" : "local-load";
}

SharingService::SharingService(Engine& engine, SenderConnector connect, Journal* journal)
    : engine_(engine), connect_(std::move(connect)), journal_(journal) {}

std::shared_ptr<SenderClient> SharingService::connect(const std::string& uri) const {
  if (!connect_) throw Error(ErrorCode::SenderUnavailable, "no sender connector configured");
  auto client = connect_(uri);
  if (!client) throw Error(ErrorCode::SenderUnavailable, "cannot reach sender " + uri);
  return client;
}

ShareResult SharingService::share_replicaset(const ShareEnvelope& envelope) {
  ShareResult result;
  result.bytes_transferred = measure_share_size(envelope);

  ReplicaSet rs;
  if (const auto* ref = std::get_if<ShareEnvelope::IdOnly>(&envelope.body)) {
    try {
      rs = connect(ref->sender_uri)->get_replicaset(ref->replicaset_id, ref->fetch_key);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SenderUnavailable) throw Error(ErrorCode::ShareFailed, e.what());
      throw;
    }
    if (rs.id != ref->replicaset_id) throw Error(ErrorCode::ShareFailed, "sender returned a different replicaset");
    result.bytes_transferred += serialize_replicaset(rs).size();
    result.fetched_from_sender = true;
  } else {
    rs = std::get<ReplicaSet>(envelope.body);
  }
  rs = normalize(std::move(rs));
  result.replicaset_id = rs.id;

  if (envelope.access_sender) {
    const AccessGrant& grant = *envelope.access_sender;
    if (grant.expiry <= now()) throw Error(ErrorCode::AccessDenied, "access grant has expired");
    try {
      // The sender confirms the grant covers this replicaset before binding.
      (void)connect(grant.sender_repo_uri)->get_replicaset(rs.id, grant.api_key);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SenderUnavailable) throw Error(ErrorCode::ShareFailed, e.what());
      throw;
    }
    RemoteBinding binding{rs, grant, envelope.receiver_user};
    std::lock_guard lock(mutex_);
    auto it = bindings_.find(rs.id);
    if (it == bindings_.end() || !(it->second == binding)) {
      if (journal_) {
        journal_->append(RecordTag::Binding, Json{{"grant", to_json(grant)},
                                                  {"replicaset", to_json(rs)},
                                                  {"user", envelope.receiver_user}});
      }
      bindings_[rs.id] = std::move(binding);
    }
    result.path = SharePath::RemoteAccess;
    return result;
  }

  auto& holder = engine_.holder();
  if (!holder.holds(envelope.receiver_user, rs.id)) holder.register_replicaset(envelope.receiver_user, rs);
  result.report = engine_.selective_load(rs, std::nullopt).report;
  result.path = SharePath::LocalLoad;
  return result;
}

QueryOutcome SharingService::remote_query(const ReplicaSetId& id, const UserQuery& q) {
  auto bound = binding(id);
  if (!bound) throw Error(ErrorCode::UnknownReplicaSet, "no remote binding for " + id.str());
  if (bound->grant.expiry <= now()) throw Error(ErrorCode::AccessDenied, "access grant has expired");
  QueryOutcome out = connect(bound->grant.sender_repo_uri)->query(id, q, bound->grant.api_key);
  // Rows outside the bound scope are dropped even if the sender sent them.
  std::erase_if(out.rows, [&](const QueryRow& row) {
    return !covers(bound->replicaset, row.source_id, row.record.path);
  });
  return out;
}

std::optional<RemoteBinding> SharingService::binding(const ReplicaSetId& id) const {
  std::lock_guard lock(mutex_);
  auto it = bindings_.find(id);
  if (it == bindings_.end()) return std::nullopt;
  return it->second;
}

bool SharingService::apply(const JournalRecord& rec) {
  if (rec.tag != RecordTag::Binding) return false;
  RemoteBinding binding{replicaset_from_json(rec.body.at("replicaset")), grant_from_json(rec.body.at("grant")),
                        rec.body.at("user").get<std::string>()};
  std::lock_guard lock(mutex_);
  bindings_[binding.replicaset.id] = std::move(binding);
  return true;
}

}  // namespace obidos
