#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"
#include "obidos/instance.hpp"
#include "obidos/sharing.hpp"
#include "support.hpp"

using namespace obidos;
using namespace obidos::testing;
namespace fs = std::filesystem;

namespace {

VirtualReplica vr(const std::string& source, const std::string& path) { return {source, EntryPath::parse(path)}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ConfigError;
}

InstanceConfig config_for(const std::string& id, const fs::path& source, std::optional<fs::path> state = std::nullopt) {
  return instance_config(id, {source}, std::move(state));
}

/// Sender and receiver instances over the same generated source.
struct Fleet {
  TempDir dir;
  std::unique_ptr<Instance> sender;
  std::unique_ptr<Instance> receiver;
  std::map<std::string, Instance*> registry;

  Fleet() {
    generate_synthetic_source(dir / "src", small_corpus({2, 2, 2, 2, 2}, "src1", 1024));
    auto connect = [this](const std::string& uri) { return in_process_connector(registry)(uri); };
    sender = std::make_unique<Instance>(config_for("sender", dir / "src"), connect);
    receiver = std::make_unique<Instance>(config_for("receiver", dir / "src"), connect);
    registry = {{sender->uri(), sender.get()}, {receiver->uri(), receiver.get()}};
  }
};

}  // namespace

// --- envelopes ---------------------------------------------------------------

TEST(Envelope, RoundTrip) {
  auto rs = ReplicaSet::create("alice", {vr("src1", "C1"), vr("src1", "C2/P1")});
  ShareEnvelope full{rs, "sender", "bob", AccessGrant{"tok", "http://s:1", Timestamp{99}}};
  EXPECT_EQ(deserialize_envelope(serialize_envelope(full)), full);
  ShareEnvelope id_only{ShareEnvelope::IdOnly{rs.id, "http://s:1", "fetch"}, "sender", "bob", std::nullopt};
  EXPECT_EQ(deserialize_envelope(serialize_envelope(id_only)), id_only);
  EXPECT_EQ(id_only.replicaset_id(), rs.id);
  EXPECT_THROW(deserialize_envelope("{\"kind\":\"id\"}"), DeserializeError);
  EXPECT_THROW(deserialize_envelope("not json"), DeserializeError);
}

TEST(Envelope, IdOnlyFixedFullLinear) {
  std::vector<std::size_t> id_sizes, full_sizes;
  for (int k : {10, 20, 40}) {
    std::vector<VirtualReplica> replicas;
    for (int i = 0; i < k; ++i) replicas.push_back(vr("src1", "C1/P1/S1/SE" + std::to_string(100 + i)));
    auto rs = ReplicaSet::create("alice", replicas, Timestamp{1});
    id_sizes.push_back(measure_share_size({ShareEnvelope::IdOnly{rs.id, "http://s:1", std::string(32, 'k')}, "s", "bob"}));
    full_sizes.push_back(measure_share_size({rs, "s", "bob"}));
  }
  EXPECT_EQ(id_sizes[0], id_sizes[1]);
  EXPECT_EQ(id_sizes[1], id_sizes[2]);
  EXPECT_EQ(full_sizes[2] - full_sizes[1], 2 * (full_sizes[1] - full_sizes[0]));
  // Both far below 100 images of 512 KiB.
  EXPECT_LT(full_sizes[2] * 100, 100u * 524288);
}

// --- key ring ----------------------------------------------------------------

TEST(KeyRing, IssueAuthenticateRevokeReplay) {
  TempDir dir;
  const auto id = ReplicaSet::create("alice", {vr("s", "C1")}).id;
  std::string token;
  {
    Journal journal(dir / "journal.log");
    KeyRing ring(&journal);
    ring.add({"static", "alice"});
    EXPECT_TRUE(ring.authenticate("static"));
    EXPECT_FALSE(ring.authenticate("nope"));
    auto key = ring.issue("alice", id, std::chrono::hours(1));
    token = key.token;
    EXPECT_FALSE(key.owner);
    EXPECT_EQ(key.scope, (std::set<ReplicaSetId>{id}));
    EXPECT_FALSE(ring.authenticate(token, Timestamp{key.expiry->ms + 1}));
    auto doomed = ring.issue("alice", id, std::chrono::hours(1));
    EXPECT_TRUE(ring.revoke(doomed.token));
    EXPECT_FALSE(ring.authenticate(doomed.token));
  }
  Journal journal(dir / "journal.log");
  KeyRing ring;
  journal.replay([&](const JournalRecord& r) { ring.apply(r); });
  EXPECT_TRUE(ring.authenticate(token));
  EXPECT_FALSE(ring.authenticate("static"));
}

// --- sharing between instances -----------------------------------------------

TEST(Sharing, IdOnlyWithoutGrantLoadsProxies) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"series", {}, true});
  auto env = f.sender->make_envelope("alice", rs.id, EnvelopeKind::IdOnly, "bob", false);
  auto result = f.receiver->share(deserialize_envelope(serialize_envelope(env)));
  EXPECT_TRUE(result.fetched_from_sender);
  EXPECT_EQ(result.path, SharePath::LocalLoad);
  ASSERT_TRUE(result.report);
  EXPECT_EQ(result.report->blobs_loaded, 0u);
  EXPECT_EQ(result.report->records_promoted, 0u);
  EXPECT_EQ(result.report->total().blob_bytes, 0u);
  EXPECT_EQ(f.receiver->sources().stats().blob_requests, 0u);
  EXPECT_TRUE(f.receiver->holder().holds("bob", rs.id));
  for (const auto& r : read_corpus(f.dir / "src")) {
    if (!path_within("C1", r.path)) continue;
    auto e = f.receiver->repository().entry("src1", EntryPath::parse(r.path));
    ASSERT_TRUE(e) << r.path;
    EXPECT_FALSE(e->is_full());
  }
  // The receiver can now query the shared replicaset itself.
  auto q = f.receiver->query("bob", rs.id, UserQuery{"study", {}, false});
  EXPECT_FALSE(q.remote);
  EXPECT_TRUE(q.load.outcome.complete);
  EXPECT_EQ(q.load.outcome.rows.size(), 4u);
}

TEST(Sharing, GrantGivesRemoteAccessEqualToSender) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"series", {}, false});
  auto env = f.sender->make_envelope("alice", rs.id, EnvelopeKind::Full, "bob", true);
  auto result = f.receiver->share(env);
  EXPECT_EQ(result.path, SharePath::RemoteAccess);
  EXPECT_FALSE(result.fetched_from_sender);
  EXPECT_EQ(f.receiver->repository().size(), 0u);
  const UserQuery q{"series", {{"modality", CompareOp::Eq, std::string("CT")}}, false};
  auto remote = f.receiver->query("bob", rs.id, q);
  EXPECT_TRUE(remote.remote);
  EXPECT_EQ(remote.load.outcome, f.sender->engine().local_query(rs, q));
  EXPECT_EQ(f.receiver->sources().stats(), TransferStats{});

  // Materializing turns the binding into a local load.
  auto local = f.receiver->materialize_binding("bob", rs.id);
  EXPECT_GT(local.report.proxies_created, 0u);
  auto after = f.receiver->query("bob", rs.id, q);
  EXPECT_FALSE(after.remote);
  EXPECT_EQ(row_keys(after.load.outcome), row_keys(remote.load.outcome));
}

TEST(Sharing, ExpiredGrantChangesNothing) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"study", {}, false});
  auto env = f.sender->make_envelope("alice", rs.id, EnvelopeKind::IdOnly, "bob", true);
  env.access_sender->expiry = Timestamp{now().ms - 1};
  EXPECT_EQ(code_of([&] { f.receiver->share(env); }), ErrorCode::AccessDenied);
  EXPECT_EQ(f.receiver->repository().size(), 0u);
  EXPECT_FALSE(f.receiver->holder().contains(rs.id));
  EXPECT_FALSE(f.receiver->sharing().binding(rs.id));
}

TEST(Sharing, RevokedKeyDeniesNextQuery) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"study", {}, false});
  auto env = f.sender->make_envelope("alice", rs.id, EnvelopeKind::Full, "bob", true);
  f.receiver->share(env);
  const UserQuery q{"study", {}, false};
  EXPECT_EQ(f.receiver->query("bob", rs.id, q).load.outcome.rows.size(), 4u);
  f.sender->keys().revoke(env.access_sender->api_key);
  EXPECT_EQ(code_of([&] { f.receiver->query("bob", rs.id, q); }), ErrorCode::AccessDenied);
}

TEST(Sharing, FailuresMapToErrors) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")});
  auto env = f.sender->make_envelope("alice", rs.id, EnvelopeKind::IdOnly, "bob", false);
  auto unreachable = env;
  std::get<ShareEnvelope::IdOnly>(unreachable.body).sender_uri = "mem://nowhere";
  EXPECT_EQ(code_of([&] { f.receiver->share(unreachable); }), ErrorCode::ShareFailed);
  auto unknown = env;
  std::get<ShareEnvelope::IdOnly>(unknown.body).replicaset_id = ReplicaSet::create("x", {vr("src1", "C2")}).id;
  EXPECT_NE(code_of([&] { f.receiver->share(unknown); }), ErrorCode::ShareFailed);
  auto bad_key = env;
  std::get<ShareEnvelope::IdOnly>(bad_key.body).fetch_key = "forged";
  EXPECT_EQ(code_of([&] { f.receiver->share(bad_key); }), ErrorCode::AccessDenied);
}

// Rows reached through a binding never leave the shared scope, whatever the
// sender holds elsewhere.
TEST(Sharing, RemoteQueryStaysInScope) {
  Fleet f;
  auto disk = read_corpus(f.dir / "src");
  f.sender->create_replicaset("alice", {vr("src1", "")}, UserQuery{"image", {}, false});
  for (const char* level : {"collection", "patient", "study", "series"}) {
    f.sender->create_replicaset("alice", {vr("src1", "")}, UserQuery{level, {}, false});
  }
  std::mt19937_64 rng(31);
  int violations = 0;
  for (int trial = 0; trial < 30; ++trial) {
    auto replicas = random_replicas(rng, disk);
    auto [rs, load] = f.sender->create_replicaset("alice", replicas);
    f.receiver->share(f.sender->make_envelope("alice", rs.id, EnvelopeKind::Full, "bob", true));
    for (int probe = 0; probe < 5; ++probe) {
      auto pq = random_query(rng);
      pq.query.include_binary = false;
      auto out = f.receiver->query("bob", rs.id, pq.query).load.outcome;
      for (const auto& row : out.rows) violations += !covers(rs, row.source_id, row.record.path);
      EXPECT_EQ(out, f.sender->engine().local_query(rs, pq.query));
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(Sharing, SameInstanceIsARegistration) {
  Fleet f;
  auto [rs, load] = f.sender->create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"study", {}, false});
  const auto before = f.sender->sources().stats();
  auto result = f.sender->share(f.sender->make_envelope("alice", rs.id, EnvelopeKind::IdOnly, "bob", false));
  EXPECT_TRUE(f.sender->holder().holds("bob", rs.id));
  ASSERT_TRUE(result.report);
  EXPECT_TRUE(result.report->total().zero());
  EXPECT_EQ(f.sender->sources().stats(), before);
}

// --- instance ----------------------------------------------------------------

TEST(Instance, CreateRetrieveUpdateDelete) {
  Fleet f;
  auto& inst = *f.sender;
  auto [rs, load] = inst.create_replicaset("alice", {vr("src1", "C1/P1")}, UserQuery{"study", {}, false});
  EXPECT_TRUE(load.outcome.complete);
  EXPECT_EQ(code_of([&] { inst.create_replicaset("alice", {vr("src1", "C2")}, std::nullopt, {}, rs.id); }),
            ErrorCode::DuplicateReplicaSet);
  auto view = inst.retrieve_replicaset("alice", rs.id);
  EXPECT_TRUE(view.loaded);
  EXPECT_TRUE(view.outcome.complete);
  EXPECT_EQ(view.outcome.rows.size(), 2u);
  ASSERT_TRUE(view.refresh);
  EXPECT_EQ(view.refresh->records_promoted, 0u);
  EXPECT_EQ(code_of([&] { inst.retrieve_replicaset("bob", rs.id); }), ErrorCode::UnknownReplicaSet);

  // Adding a patient only costs that patient's subtree.
  TempDir solo_dir;
  EngineRig solo;
  solo.sources.add(std::make_shared<FilesystemSource>(f.dir / "src"));
  auto solo_rs = ReplicaSet::create("x", {vr("src1", "C2/P1")});
  solo.holder.register_replicaset("x", solo_rs);
  const auto expected = solo.engine.selective_load(solo_rs, UserQuery{"study", {}, false}).report.total();
  auto upd = inst.update_replicaset("alice", rs.id, {vr("src1", "C1/P1"), vr("src1", "C2/P1")});
  EXPECT_EQ(upd.added, (std::vector<VirtualReplica>{vr("src1", "C2/P1")}));
  EXPECT_TRUE(upd.removed.empty());
  EXPECT_EQ(upd.load.report.total(), expected);
  EXPECT_EQ(upd.load.outcome.rows.size(), 4u);

  inst.delete_replicaset("alice", rs.id);
  EXPECT_EQ(code_of([&] { inst.retrieve_replicaset("alice", rs.id); }), ErrorCode::UnknownReplicaSet);
  inst.gc();
  EXPECT_EQ(inst.repository().size(), 0u);
}

TEST(Instance, GcRetainsOverlap) {
  Fleet f;
  auto& inst = *f.sender;
  auto [a, la] = inst.create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"image", {}, true});
  auto [b, lb] = inst.create_replicaset("bob", {vr("src1", "C1/P2"), vr("src1", "C2/P1")}, UserQuery{"image", {}, true});
  EXPECT_EQ(inst.gc().total(), 0u);
  inst.delete_replicaset("alice", a.id);
  auto removed = inst.gc();
  EXPECT_GT(removed.entries_removed, 0u);
  EXPECT_TRUE(inst.repository().entry("src1", EntryPath::parse("C1/P2/S1/SE1/I1"))->is_full());
  EXPECT_FALSE(inst.repository().entry("src1", EntryPath::parse("C1/P1/S1")));
  EXPECT_TRUE(inst.retrieve_replicaset("bob", b.id, false).outcome.answers(UserQuery{"image", {}, true}));
}

TEST(Instance, RestartReplaysState) {
  TempDir dir;
  generate_synthetic_source(dir / "src", small_corpus());
  auto cfg = config_for("solo", dir / "src", dir / "state");
  ReplicaSetId kept;
  std::vector<RepoEntry> entries;
  std::set<VirtualReplica> loaded;
  std::string grant;
  {
    Instance inst(cfg);
    auto [a, la] = inst.create_replicaset("alice", {vr("src1", "C1")}, UserQuery{"series", {}, true});
    auto [b, lb] = inst.create_replicaset("bob", {vr("src1", "C2/P1")}, UserQuery{"study", {}, false});
    inst.update_replicaset("alice", a.id, {vr("src1", "C1"), vr("src1", "C2/P2")});
    inst.delete_replicaset("bob", b.id);
    inst.gc();
    grant = inst.issue_grant("alice", a.id).api_key;
    kept = a.id;
    entries = inst.repository().entries();
    loaded = inst.holder().loaded();
  }
  Instance again(cfg);
  EXPECT_EQ(again.repository().entries(), entries);
  EXPECT_EQ(again.holder().loaded(), loaded);
  EXPECT_TRUE(again.holder().holds("alice", kept));
  EXPECT_TRUE(again.keys().authenticate(grant));
  EXPECT_EQ(again.saved_query(kept), (UserQuery{"series", {}, true}));
  const auto before = again.sources().stats();
  auto q = again.query("alice", kept, UserQuery{"series", {}, true});
  EXPECT_TRUE(q.load.report.served_from_repository);
  EXPECT_EQ(again.sources().stats(), before);
}

TEST(InstanceConfig, ParsesAndResolvesPaths) {
  const Json j = Json::parse(R"({
    "instance_id": "lab",
    "listen": {"host": "0.0.0.0", "port": 9000},
    "repository": "state",
    "remote_defaults": {"request_latency_ms": 5},
    "sources": [{"root": "corpus"}, {"root": "/abs/other", "remote": true}],
    "api_keys": [{"token": "t1", "user": "alice"}],
    "grant_ttl_s": 60
  })");
  auto c = InstanceConfig::from_json(j, "/etc/obidos");
  EXPECT_EQ(c.instance_id, "lab");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.uri(), "http://0.0.0.0:9000");
  EXPECT_EQ(*c.repository_root, fs::path("/etc/obidos/state"));
  EXPECT_EQ(c.sources[0].root, fs::path("/etc/obidos/corpus"));
  EXPECT_FALSE(c.sources[0].remote);
  ASSERT_TRUE(c.sources[1].remote);
  EXPECT_EQ(c.sources[1].remote->per_request_latency, std::chrono::milliseconds(5));
  EXPECT_EQ(c.grant_ttl, std::chrono::seconds(60));
  EXPECT_EQ(code_of([&] { InstanceConfig::from_json(Json::parse(R"({"sources": [{}]})")); }), ErrorCode::ConfigError);
}
