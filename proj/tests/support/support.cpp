#include "support.hpp"

#include <fstream>
#include <iterator>

#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace obidos::testing {

TempDir::TempDir(const std::string& tag)
    : path_(fs::temp_directory_path() / (tag + "-" + random_token(8))) {
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

GeneratorParams small_corpus(std::vector<std::size_t> counts, std::string source_id, std::size_t image_size) {
  GeneratorParams p;
  p.counts = std::move(counts);
  p.source_id = std::move(source_id);
  p.image_size_bytes = image_size;
  return p;
}

// --- FlakySource ---------------------------------------------------------------

void FlakySource::gate(const EntryPath& path) {
  if (failing_ && fail_prefix_.is_prefix_of(path)) {
    throw Error(ErrorCode::SourceUnavailable, "injected failure at '" + path.str() + "'");
  }
  if (budget_.load() == 0) throw Error(ErrorCode::SourceUnavailable, "injected failure after budget");
  if (budget_.load() > 0) --budget_;
}

std::vector<std::string> FlakySource::list_children(const EntryPath& path) {
  gate(path);
  return inner_->list_children(path);
}

MetadataRecord FlakySource::fetch_metadata(const EntryPath& path) {
  gate(path);
  return inner_->fetch_metadata(path);
}

Blob FlakySource::fetch_blob(const EntryPath& path) {
  gate(path);
  return inner_->fetch_blob(path);
}

// --- corpus oracle -------------------------------------------------------------

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void walk(const fs::path& dir, const std::string& source_id, const std::string& prefix, std::size_t depth,
          std::vector<DiskRecord>& out) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory()) {
      const std::string path = prefix.empty() ? name : prefix + "/" + name;
      const std::string text = slurp(entry.path() / "meta.json");
      DiskRecord r{source_id, path, depth + 1, json::parse(text).at("attributes"), text.size(), 0};
      out.push_back(r);
      walk(entry.path(), source_id, path, depth + 1, out);
    } else if (entry.path().extension() == ".meta") {
      const std::string id = entry.path().stem().string();
      const std::string text = slurp(entry.path());
      const fs::path blob = entry.path().parent_path() / (id + ".blob");
      DiskRecord r{source_id, prefix + "/" + id, depth + 1, json::parse(text).at("attributes"), text.size(),
                   fs::exists(blob) ? fs::file_size(blob) : 0};
      out.push_back(r);
    }
  }
}

enum class Kind { String, Int, Float, Time, Other };

Kind kind_of(const json& v) {
  if (v.is_string()) return Kind::String;
  if (v.is_number_integer()) return Kind::Int;
  if (v.is_number_float()) return Kind::Float;
  if (v.is_object() && v.contains("$ts")) return Kind::Time;
  return Kind::Other;
}

/// -1, 0, 1, or 2 when the two values cannot be compared.
int order(const json& a, const json& b) {
  const Kind ka = kind_of(a);
  const Kind kb = kind_of(b);
  auto sign = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
  if (ka == Kind::String) return kb == Kind::String ? sign(a.get<std::string>(), b.get<std::string>()) : 2;
  if (ka == Kind::Time) {
    const auto t = a.at("$ts").get<std::int64_t>();
    if (kb == Kind::Time) return sign(t, b.at("$ts").get<std::int64_t>());
    if (kb == Kind::Int) return sign(t, b.get<std::int64_t>());
    return 2;
  }
  if (ka == Kind::Int && kb == Kind::Int) return sign(a.get<std::int64_t>(), b.get<std::int64_t>());
  const bool na = ka == Kind::Int || ka == Kind::Float;
  const bool nb = kb == Kind::Int || kb == Kind::Float;
  if (na && nb) return sign(a.get<double>(), b.get<double>());
  return 2;
}

}  // namespace

std::vector<DiskRecord> read_corpus(const fs::path& root) {
  const json desc = json::parse(slurp(root / "source.json"));
  std::vector<DiskRecord> out;
  walk(root, desc.at("source_id").get<std::string>(), "", 0, out);
  return out;
}

bool oracle_matches(const json& attributes, const OraclePredicate& p) {
  if (!attributes.contains(p.attribute)) return false;
  const json& v = attributes.at(p.attribute);
  if (p.op == "contains") {
    return v.is_string() && p.literal.is_string() &&
           v.get<std::string>().find(p.literal.get<std::string>()) != std::string::npos;
  }
  const int c = order(v, p.literal);
  if (c == 2) return false;
  if (p.op == "=" || p.op == "==") return c == 0;
  if (p.op == "!=" || p.op == "<>") return c != 0;
  if (p.op == "<") return c < 0;
  if (p.op == "<=") return c <= 0;
  if (p.op == ">") return c > 0;
  if (p.op == ">=") return c >= 0;
  return false;
}

bool path_within(const std::string& prefix, const std::string& path) {
  if (prefix.empty()) return true;
  return path == prefix || (path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0 &&
                            path[prefix.size()] == '/');
}

std::set<std::string> oracle_query(const std::vector<DiskRecord>& corpus,
                                   const std::vector<std::pair<std::string, std::string>>& scope, std::size_t depth,
                                   const std::vector<OraclePredicate>& predicates) {
  std::set<std::string> out;
  for (const auto& r : corpus) {
    if (r.depth != depth) continue;
    bool covered = false;
    for (const auto& [source, prefix] : scope) covered = covered || (source == r.source_id && path_within(prefix, r.path));
    if (!covered) continue;
    bool all = true;
    for (const auto& p : predicates) all = all && oracle_matches(r.attributes, p);
    if (all) out.insert(r.source_id + ":" + r.path);
  }
  return out;
}

}  // namespace obidos::testing

namespace obidos::testing {

namespace {

struct PredicateTemplate {
  std::string attribute;
  CompareOp op;
  std::string oracle_op;
};

AttributeValue literal_for(const std::string& attribute, std::mt19937_64& rng) {
  if (attribute == "modality") return std::string(rng() % 2 ? "CT" : "MR");
  if (attribute == "sex") return std::string(rng() % 2 ? "F" : "M");
  if (attribute == "description") return std::string("P" + std::to_string(1 + rng() % 3));
  if (attribute == "slice_thickness") return 0.5 * static_cast<double>(1 + rng() % 6);
  if (attribute == "age") return static_cast<std::int64_t>(20 + rng() % 60);
  if (attribute == "study_date") return Timestamp{1'600'000'000'000 + static_cast<std::int64_t>(rng() % 40) * 86'400'000};
  if (attribute == "instance_number") return static_cast<std::int64_t>(1 + rng() % 3);
  return static_cast<std::int64_t>(rng() % 1000);  // number
}

json oracle_literal(const AttributeValue& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Timestamp>) return json{{"$ts", x.ms}};
        else return json(x);
      },
      v);
}

}  // namespace

PairedQuery random_query(std::mt19937_64& rng) {
  static const std::vector<std::string> levels{"collection", "patient", "study", "series", "image"};
  static const std::map<std::string, std::vector<std::string>> attrs{
      {"collection", {"number"}},
      {"patient", {"number", "sex", "age"}},
      {"study", {"number", "study_date", "description"}},
      {"series", {"number", "modality", "slice_thickness"}},
      {"image", {"number", "instance_number"}},
  };
  static const std::vector<std::pair<CompareOp, std::string>> ops{
      {CompareOp::Eq, "="}, {CompareOp::Ne, "!="}, {CompareOp::Lt, "<"},
      {CompareOp::Le, "<="}, {CompareOp::Gt, ">"}, {CompareOp::Ge, ">="}};
  PairedQuery out;
  out.query.target_level = levels[rng() % levels.size()];
  out.query.include_binary = out.query.target_level == "image" && rng() % 3 == 0;
  const auto& names = attrs.at(out.query.target_level);
  // Occasionally probe an attribute the level does not carry.
  const std::size_t n = rng() % 3;
  for (std::size_t i = 0; i < n; ++i) {
    std::string attribute = rng() % 10 == 0 ? "absent" : names[rng() % names.size()];
    AttributeValue literal = literal_for(attribute, rng);
    CompareOp op;
    std::string oracle_op;
    if (attribute == "description") {
      op = CompareOp::Contains;
      oracle_op = "contains";
    } else {
      const auto& pick = ops[rng() % ops.size()];
      op = pick.first;
      oracle_op = pick.second;
    }
    out.query.predicates.push_back({attribute, op, literal});
    out.oracle.push_back({attribute, oracle_op, oracle_literal(literal)});
  }
  return out;
}

std::vector<VirtualReplica> random_replicas(std::mt19937_64& rng, const std::vector<DiskRecord>& corpus) {
  std::vector<VirtualReplica> out;
  const std::size_t n = 1 + rng() % 3;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 12 == 0) {
      out.push_back({corpus.front().source_id, EntryPath{}});
      continue;
    }
    // Prefer coarse pointers; leaves are legal but rarely interesting.
    const DiskRecord* pick = nullptr;
    for (int tries = 0; tries < 8; ++tries) {
      pick = &corpus[rng() % corpus.size()];
      if (pick->depth <= 1 + rng() % 4) break;
    }
    out.push_back({pick->source_id, EntryPath::parse(pick->path)});
  }
  return out;
}

std::set<std::string> row_keys(const QueryOutcome& outcome) {
  std::set<std::string> out;
  for (const auto& r : outcome.rows) out.insert(r.source_id + ":" + r.record.path.str());
  return out;
}

std::string describe(const std::vector<TraceEvent>& events) {
  std::string out;
  for (const auto& e : events) out += (out.empty() ? "" : " ") + to_string(e);
  return out;
}

std::vector<TraceScenario> run_trace_scenarios(const fs::path& work_dir) {
  using K = TraceEvent::Kind;
  auto get = [](const VirtualReplica& v, bool hit) { return TraceEvent{K::HolderGet, v, hit}; };
  auto load = [](const VirtualReplica& v) { return TraceEvent{K::LoadData, v, false}; };
  auto put = [](const VirtualReplica& v) { return TraceEvent{K::HolderPut, v, false}; };
  auto repo_query = [](bool answered) { return TraceEvent{K::RepositoryQuery, std::nullopt, answered}; };

  std::vector<TraceScenario> out;
  int counter = 0;
  auto make_rig = [&](std::shared_ptr<Source>* inner_out = nullptr) {
    const fs::path dir = work_dir / ("trace-" + std::to_string(counter++));
    generate_synthetic_source(dir, small_corpus({2, 2, 2, 2, 2}, "src1", 64));
    auto rig = std::make_unique<EngineRig>();
    auto src = std::make_shared<FilesystemSource>(dir);
    if (inner_out) *inner_out = src;
    return std::make_pair(std::move(rig), src);
  };

  const VirtualReplica c1{"src1", EntryPath::parse("C1")};
  const VirtualReplica c2p1{"src1", EntryPath::parse("C2/P1")};
  const UserQuery studies{"study", {}, false};
  const UserQuery ct_series{"series", {{"modality", CompareOp::Eq, std::string("CT")}}, false};

  auto record = [](EngineRig& rig, TraceScenario& s, auto&& fn) {
    rig.engine.set_trace(&s.actual);
    try {
      fn();
    } catch (const LoadAborted&) {
      s.aborted = true;
    }
    rig.engine.set_trace(nullptr);
  };

  {
    auto [rig, src] = make_rig();
    rig->sources.add(src);
    auto rs = ReplicaSet::create("u", {c1, c2p1});
    rig->holder.register_replicaset("u", rs);
    TraceScenario s{"fresh load"};
    s.expected = {get(c1, false), load(c1), put(c1), get(c2p1, false), load(c2p1), put(c2p1)};
    record(*rig, s, [&] { rig->engine.selective_load(rs, studies); });
    out.push_back(std::move(s));
  }
  {
    auto [rig, src] = make_rig();
    rig->sources.add(src);
    auto rs = ReplicaSet::create("u", {c1, c2p1});
    rig->holder.register_replicaset("u", rs);
    rig->engine.selective_load(rs, studies);
    TraceScenario s{"holder hit, repository complete"};
    s.expected = {get(c1, true), get(c2p1, true), repo_query(true)};
    record(*rig, s, [&] { rig->engine.selective_load(rs, studies); });
    out.push_back(std::move(s));
  }
  {
    auto [rig, src] = make_rig();
    rig->sources.add(src);
    auto rs = ReplicaSet::create("u", {c1, c2p1});
    rig->holder.register_replicaset("u", rs);
    rig->engine.selective_load(rs, studies);
    TraceScenario s{"holder hit, repository incomplete"};
    s.expected = {get(c1, true), get(c2p1, true), repo_query(false), load(c1), load(c2p1)};
    record(*rig, s, [&] { rig->engine.selective_load(rs, ct_series); });
    out.push_back(std::move(s));
  }
  {
    auto [rig, src] = make_rig();
    rig->sources.add(src);
    auto rs = ReplicaSet::create("u", {c1, c2p1});
    rig->holder.register_replicaset("u", rs);
    TraceScenario s{"no query"};
    s.expected = {get(c1, false), load(c1), put(c1), get(c2p1, false), load(c2p1), put(c2p1)};
    record(*rig, s, [&] { rig->engine.selective_load(rs, std::nullopt); });
    out.push_back(std::move(s));
  }
  {
    auto [rig, src] = make_rig();
    auto flaky = std::make_shared<FlakySource>(src);
    flaky->fail_under(EntryPath::parse("C2"));
    rig->sources.add(flaky);
    auto rs = ReplicaSet::create("u", {c1, c2p1});
    rig->holder.register_replicaset("u", rs);
    TraceScenario s{"source failure mid-load"};
    s.expected_abort = true;
    s.expected = {get(c1, false), load(c1), put(c1), get(c2p1, false), load(c2p1)};
    record(*rig, s, [&] { rig->engine.selective_load(rs, studies); });
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace obidos::testing

#include "obidos/client.hpp"

namespace obidos::testing {

InstanceConfig instance_config(const std::string& id, const std::vector<fs::path>& sources,
                               std::optional<fs::path> state) {
  InstanceConfig c;
  c.instance_id = id;
  c.public_uri = "mem://" + id;
  c.repository_root = std::move(state);
  for (const auto& root : sources) c.sources.push_back({root, std::nullopt});
  c.api_keys.push_back({id + "-alice-key", "alice"});
  c.api_keys.push_back({id + "-bob-key", "bob"});
  return c;
}

HttpNode::HttpNode(InstanceConfig config) {
  config.host = "127.0.0.1";
  instance = std::make_unique<Instance>(std::move(config), http_connector());
  service = std::make_unique<HttpService>(*instance);
  const int port = service->start("127.0.0.1", 0);
  uri = "http://127.0.0.1:" + std::to_string(port);
  instance->set_public_uri(uri);
}

HttpNode::~HttpNode() {
  if (service) service->stop();
}

}  // namespace obidos::testing
