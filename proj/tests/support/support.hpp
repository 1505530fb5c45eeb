#pragma once

// Shared fixtures for the test binaries: scratch directories, a source that
// fails on demand, and a brute-force reader of generated corpora that does
// not go through the library's connectors or codecs.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "obidos/etl.hpp"
#include "obidos/holder.hpp"
#include "obidos/instance.hpp"
#include "obidos/service.hpp"
#include "obidos/model.hpp"
#include "obidos/repository.hpp"
#include "obidos/source.hpp"

namespace obidos::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "obidos");
  ~TempDir();

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Small medical corpus: `counts` children per level, images last.
GeneratorParams small_corpus(std::vector<std::size_t> counts = {2, 2, 2, 2, 2}, std::string source_id = "src1",
                             std::size_t image_size = 256);

/// Wraps a source and throws SourceUnavailable from a chosen call on.
class FlakySource final : public Source {
 public:
  explicit FlakySource(std::shared_ptr<Source> inner) : inner_(std::move(inner)) {}

  /// Fail every primitive whose path lies under `prefix`.
  void fail_under(EntryPath prefix) { fail_prefix_ = std::move(prefix); failing_ = true; }
  /// Fail every primitive after `n` more successful ones.
  void fail_after(std::int64_t n) { budget_ = n; }
  void heal() { failing_ = false; budget_ = -1; }

  const SourceDescriptor& descriptor() const override { return inner_->descriptor(); }
  std::vector<std::string> list_children(const EntryPath& path) override;
  MetadataRecord fetch_metadata(const EntryPath& path) override;
  Blob fetch_blob(const EntryPath& path) override;
  TransferStats stats() const override { return inner_->stats(); }

 private:
  void gate(const EntryPath& path);

  std::shared_ptr<Source> inner_;
  bool failing_ = false;
  EntryPath fail_prefix_;
  std::atomic<std::int64_t> budget_{-1};
};

/// One record as stored on disk, read straight from the sidecar JSON.
struct DiskRecord {
  std::string source_id;
  std::string path;  // "C1/P1/..."
  std::size_t depth = 0;
  nlohmann::json attributes;
  std::uint64_t sidecar_bytes = 0;
  std::uint64_t blob_bytes = 0;
};

/// Every record of a generated source, found by walking the directory tree.
std::vector<DiskRecord> read_corpus(const std::filesystem::path& root);

/// Predicate for the oracle: attribute, operator text, literal as JSON.
struct OraclePredicate {
  std::string attribute;
  std::string op;
  nlohmann::json literal;
};

/// Evaluates one predicate against raw sidecar attributes. Written
/// independently of the library's comparison code.
bool oracle_matches(const nlohmann::json& attributes, const OraclePredicate& p);

/// Paths ("source:path") of records at `depth` covered by `scope` and
/// matching every predicate.
std::set<std::string> oracle_query(const std::vector<DiskRecord>& corpus,
                                   const std::vector<std::pair<std::string, std::string>>& scope, std::size_t depth,
                                   const std::vector<OraclePredicate>& predicates);

/// A query in both the library's form and the oracle's form.
struct PairedQuery {
  UserQuery query;
  std::vector<OraclePredicate> oracle;
};

/// Random medical-profile query: a target level and zero to two predicates
/// drawn from attributes the generator writes at that level.
PairedQuery random_query(std::mt19937_64& rng);

/// Random replica list over a generated corpus: 1-3 pointers at random
/// depths, drawn from existing paths (or the whole source).
std::vector<VirtualReplica> random_replicas(std::mt19937_64& rng, const std::vector<DiskRecord>& corpus);

/// "source:path" for every row of an outcome.
std::set<std::string> row_keys(const QueryOutcome& outcome);

/// Volatile engine over in-memory repository and holder.
struct EngineRig {
  SourceRegistry sources;
  Repository repo;
  ReplicaSetHolder holder{repo};
  Engine engine{sources, repo, holder};
};

/// One scripted run of the selective load with the expected call sequence.
struct TraceScenario {
  std::string name;
  std::vector<TraceEvent> expected;
  std::vector<TraceEvent> actual;
  bool aborted = false;
  bool expected_abort = false;

  bool matches() const { return expected == actual && aborted == expected_abort; }
};

/// Fresh load, holder hit with a complete repository, holder hit with an
/// incomplete repository, no query, and a mid-load source failure, each on
/// its own generated corpus under `work_dir`.
std::vector<TraceScenario> run_trace_scenarios(const std::filesystem::path& work_dir);

std::string describe(const std::vector<TraceEvent>& events);

/// Instance over `sources` with owner keys "<id>-alice-key" and
/// "<id>-bob-key"; in-memory unless `state` is given.
InstanceConfig instance_config(const std::string& id, const std::vector<std::filesystem::path>& sources,
                               std::optional<std::filesystem::path> state = std::nullopt);

/// An instance served over HTTP on an ephemeral local port, reaching other
/// instances through HTTP as well.
struct HttpNode {
  std::unique_ptr<Instance> instance;
  std::unique_ptr<HttpService> service;
  std::string uri;

  explicit HttpNode(InstanceConfig config);
  ~HttpNode();
};

/// True if `prefix` is an ancestor-or-self of `path` in "a/b/c" form.
bool path_within(const std::string& prefix, const std::string& path);

}  // namespace obidos::testing
