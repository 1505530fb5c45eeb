#pragma once

// One deployed engine: repository, holder, sources, key ring and sharing
// wired to a shared journal, with the operations the HTTP service exposes.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "obidos/etl.hpp"
#include "obidos/holder.hpp"
#include "obidos/journal.hpp"
#include "obidos/repository.hpp"
#include "obidos/sharing.hpp"
#include "obidos/source.hpp"

namespace obidos {

struct SourceConfig {
  std::filesystem::path root;
  /// Wraps the source in simulated network latency when set.
  std::optional<RemoteProfile> remote;
};

struct InstanceConfig {
  std::string instance_id = "obidos";
  std::string host = "127.0.0.1";
  int port = 8080;
  /// URI other instances use to reach this one; defaults to http://host:port.
  std::string public_uri;
  /// Persistent state directory; in-memory when unset.
  std::optional<std::filesystem::path> repository_root;
  std::vector<SourceConfig> sources;
  std::vector<ApiKey> api_keys;
  RemoteProfile remote_defaults;
  std::chrono::milliseconds grant_ttl{std::chrono::hours(24)};

  std::string uri() const;

  /// Relative paths are resolved against `base_dir`. Throws ConfigError.
  static InstanceConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static InstanceConfig load(const std::filesystem::path& file);
};

struct ReplicaSetView {
  ReplicaSet replicaset;
  bool loaded = false;
  std::optional<UserQuery> query;
  QueryOutcome outcome;
  std::optional<LoadReport> refresh;
};

struct UpdateResult {
  ReplicaSet replicaset;
  std::vector<VirtualReplica> added;
  std::vector<VirtualReplica> removed;
  LoadResult load;
};

struct QueryResult {
  LoadResult load;
  /// Answered by the sender through a remote binding.
  bool remote = false;
};

enum class EnvelopeKind { IdOnly, Full };

class Instance {
 public:
  /// Opens (and replays) the journal under the repository root, then
  /// registers the configured sources and keys.
  explicit Instance(InstanceConfig config, SenderConnector connect = {});

  Instance(const Instance&) = delete;
  Instance& operator=(const Instance&) = delete;

  const InstanceConfig& config() const noexcept { return config_; }
  std::string uri() const { return config_.uri(); }
  /// For services bound to an ephemeral port; call before serving.
  void set_public_uri(std::string uri) { config_.public_uri = std::move(uri); }

  Repository& repository() noexcept { return *repo_; }
  ReplicaSetHolder& holder() noexcept { return *holder_; }
  SourceRegistry& sources() noexcept { return sources_; }
  Engine& engine() noexcept { return *engine_; }
  KeyRing& keys() noexcept { return keys_; }
  SharingService& sharing() noexcept { return *sharing_; }

  /// Registers the replicaset and runs the selective load for `q`. A
  /// caller-chosen id that already exists is a DuplicateReplicaSet.
  std::pair<ReplicaSet, LoadResult> create_replicaset(const std::string& user, std::vector<VirtualReplica> replicas,
                                                       const std::optional<UserQuery>& q = std::nullopt,
                                                       LoadOptions options = {},
                                                       std::optional<ReplicaSetId> id = std::nullopt);
  /// Current state; refreshes from the sources once everything is loaded.
  ReplicaSetView retrieve_replicaset(const std::string& user, const ReplicaSetId& id, bool refresh = true);
  UpdateResult update_replicaset(const std::string& user, const ReplicaSetId& id,
                                 std::vector<VirtualReplica> replicas);
  void delete_replicaset(const std::string& user, const ReplicaSetId& id);

  /// Local selective load, or a forwarded query for remote bindings.
  QueryResult query(const std::string& user, const ReplicaSetId& id, const UserQuery& q, LoadOptions options = {});

  /// Loads a remotely bound replicaset into this instance from the sources.
  LoadResult materialize_binding(const std::string& user, const ReplicaSetId& id);

  GcResult gc();

  AccessGrant issue_grant(const std::string& user, const ReplicaSetId& id);
  ShareEnvelope make_envelope(const std::string& user, const ReplicaSetId& id, EnvelopeKind kind,
                              const std::string& receiver_user, bool with_access);
  ShareResult share(const ShareEnvelope& envelope) { return sharing_->share_replicaset(envelope); }

  /// Sender side: the replicaset body for a key allowed to read it.
  ReplicaSet sender_get(const ReplicaSetId& id, const std::string& token);
  /// Sender side: repository-only query confined to the replicaset.
  QueryOutcome sender_query(const ReplicaSetId& id, const UserQuery& q, const std::string& token);

  /// Whether `key` may act on `id`. Owner keys need their user to hold it.
  bool allowed(const ApiKey& key, const ReplicaSetId& id) const;

  std::optional<UserQuery> saved_query(const ReplicaSetId& id) const;

 private:
  void check_owner(const std::string& user, const ReplicaSetId& id) const;
  void check_replicas(std::span<const VirtualReplica> replicas, const std::optional<UserQuery>& q = std::nullopt) const;
  void save_query(const ReplicaSetId& id, const std::optional<UserQuery>& q);
  void replay();
  void mark_loaded(const ReplicaSetId& id);

  InstanceConfig config_;
  std::unique_ptr<Journal> journal_;
  std::unique_ptr<Repository> repo_;
  std::unique_ptr<ReplicaSetHolder> holder_;
  SourceRegistry sources_;
  std::unique_ptr<Engine> engine_;
  KeyRing keys_;
  std::unique_ptr<SharingService> sharing_;

  mutable std::mutex mutex_;
  std::map<ReplicaSetId, UserQuery> saved_queries_;
};

/// Resolves sender URIs to in-process instances (tests and single-process
/// deployments).
SenderConnector in_process_connector(std::map<std::string, Instance*> instances);

}  // namespace obidos
