#pragma once

// Replicaset exchange between instances: share envelopes (by id or by
// value), API-key grants scoped to replicasets, and remote bindings that
// forward queries to the sender's repository.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>

#include "obidos/etl.hpp"
#include "obidos/journal.hpp"
#include "obidos/model.hpp"
#include "obidos/repository.hpp"

namespace obidos {

struct AccessGrant {
  std::string api_key;
  std::string sender_repo_uri;
  Timestamp expiry;

  bool operator==(const AccessGrant&) const = default;
};

struct ShareEnvelope {
  /// Reference to a replicaset held by the sender. `fetch_key` is a read-only
  /// key for retrieving it.
  struct IdOnly {
    ReplicaSetId replicaset_id;
    std::string sender_uri;
    std::string fetch_key;

    bool operator==(const IdOnly&) const = default;
  };

  std::variant<IdOnly, ReplicaSet> body;
  std::string sender_instance;
  std::string receiver_user;
  std::optional<AccessGrant> access_sender;

  bool is_id_only() const noexcept { return std::holds_alternative<IdOnly>(body); }
  ReplicaSetId replicaset_id() const;

  bool operator==(const ShareEnvelope&) const = default;
};

Json to_json(const AccessGrant& grant);
AccessGrant grant_from_json(const Json& j);
std::string serialize_envelope(const ShareEnvelope& envelope);
/// Throws DeserializeError.
ShareEnvelope deserialize_envelope(std::string_view bytes);
/// Exact serialized length of the envelope.
std::size_t measure_share_size(const ShareEnvelope& envelope);

/// The sender as seen from a receiver.
class SenderClient {
 public:
  virtual ~SenderClient() = default;
  /// Throws AccessDenied, UnknownReplicaSet or SenderUnavailable.
  virtual ReplicaSet get_replicaset(const ReplicaSetId& id, const std::string& api_key) = 0;
  /// Repository-only query at the sender, confined to the replicaset.
  virtual QueryOutcome query(const ReplicaSetId& id, const UserQuery& q, const std::string& api_key) = 0;
};

/// Resolves a sender URI to a client; throws SenderUnavailable.
using SenderConnector = std::function<std::shared_ptr<SenderClient>(const std::string& uri)>;

struct ApiKey {
  std::string token;
  std::string user;
  /// Owner keys act on every replicaset their user holds; scoped keys only
  /// on the listed ids.
  bool owner = true;
  std::set<ReplicaSetId> scope;
  std::optional<Timestamp> expiry;

  bool expired(Timestamp at) const noexcept { return expiry && *expiry <= at; }
  bool operator==(const ApiKey&) const = default;
};

Json to_json(const ApiKey& key);
ApiKey api_key_from_json(const Json& j);

class KeyRing {
 public:
  explicit KeyRing(Journal* journal = nullptr) : journal_(journal) {}

  /// Static keys from configuration; not journaled.
  void add(ApiKey key);
  /// Valid, unexpired key or nullopt.
  std::optional<ApiKey> authenticate(std::string_view token, Timestamp at = now()) const;
  /// New random key scoped to `id`, journaled.
  ApiKey issue(const std::string& user, const ReplicaSetId& id, std::chrono::milliseconds ttl);
  bool revoke(std::string_view token);

  bool apply(const JournalRecord& rec);

 private:
  Journal* journal_;
  mutable std::mutex mutex_;
  std::map<std::string, ApiKey, std::less<>> keys_;
};

enum class SharePath { RemoteAccess, LocalLoad };

std::string_view to_string(SharePath path) noexcept;

struct ShareResult {
  ReplicaSetId replicaset_id;
  bool fetched_from_sender = false;
  SharePath path = SharePath::LocalLoad;
  /// Envelope plus any replicaset body fetched from the sender.
  std::uint64_t bytes_transferred = 0;
  std::optional<LoadReport> report;
};

struct RemoteBinding {
  ReplicaSet replicaset;
  AccessGrant grant;
  /// Receiving user the envelope was addressed to.
  std::string user;

  bool operator==(const RemoteBinding&) const = default;
};

/// Receiver side of replicaset sharing.
class SharingService {
 public:
  SharingService(Engine& engine, SenderConnector connect, Journal* journal = nullptr);

  /// Throws ShareFailed (sender unreachable), AccessDenied (bad or expired
  /// grant) or UnknownReplicaSet (sender does not know the id).
  ShareResult share_replicaset(const ShareEnvelope& envelope);

  /// Forwards `q` to the bound sender. Throws UnknownReplicaSet when there is
  /// no binding, AccessDenied, or SenderUnavailable.
  QueryOutcome remote_query(const ReplicaSetId& id, const UserQuery& q);

  std::optional<RemoteBinding> binding(const ReplicaSetId& id) const;
  bool apply(const JournalRecord& rec);

 private:
  std::shared_ptr<SenderClient> connect(const std::string& uri) const;

  Engine& engine_;
  SenderConnector connect_;
  Journal* journal_;

  mutable std::mutex mutex_;
  std::map<ReplicaSetId, RemoteBinding> bindings_;
};

}  // namespace obidos
