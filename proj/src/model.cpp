#include "obidos/model.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace obidos {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidPath: return "InvalidPath";
    case ErrorCode::InvalidReplicaSet: return "InvalidReplicaSet";
    case ErrorCode::SourceNotInReplicaSet: return "SourceNotInReplicaSet";
    case ErrorCode::DeserializeError: return "DeserializeError";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::PathNotFound: return "PathNotFound";
    case ErrorCode::SourceUnavailable: return "SourceUnavailable";
    case ErrorCode::GeneratorRefused: return "GeneratorRefused";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::BlobNotFound: return "BlobNotFound";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::UnknownReplicaSet: return "UnknownReplicaSet";
    case ErrorCode::DuplicateReplicaSet: return "DuplicateReplicaSet";
    case ErrorCode::ShareFailed: return "ShareFailed";
    case ErrorCode::AccessDenied: return "AccessDenied";
    case ErrorCode::SenderUnavailable: return "SenderUnavailable";
    case ErrorCode::JournalCorrupt: return "JournalCorrupt";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

ErrorCode error_code_from_string(std::string_view name) noexcept {
  for (int c = 0; c <= static_cast<int>(ErrorCode::ConfigError); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == name) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::ConfigError;
}

Timestamp now() {
  using namespace std::chrono;
  return {duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count()};
}

// --- GranularitySchema -------------------------------------------------------

GranularitySchema GranularitySchema::medical() {
  return {{"collection", "patient", "study", "series"}};
}

std::optional<std::size_t> GranularitySchema::depth_of(std::string_view level) const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == level) return i + 1;
  }
  if (level == kLeafLevel) return leaf_depth();
  return std::nullopt;
}

std::string GranularitySchema::level_at(std::size_t depth) const {
  if (depth >= 1 && depth <= levels.size()) return levels[depth - 1];
  if (depth == leaf_depth()) return std::string(kLeafLevel);
  throw Error(ErrorCode::InvalidPath, "no level at depth " + std::to_string(depth));
}

void GranularitySchema::validate() const {
  if (levels.empty()) throw Error(ErrorCode::InvalidPath, "schema needs at least one level");
  std::set<std::string_view> seen;
  for (const auto& name : levels) {
    if (name.empty()) throw Error(ErrorCode::InvalidPath, "empty level name");
    if (name == kLeafLevel) throw Error(ErrorCode::InvalidPath, "level name 'image' is reserved");
    if (!seen.insert(name).second) throw Error(ErrorCode::InvalidPath, "duplicate level " + name);
  }
}

// --- EntryPath ---------------------------------------------------------------

namespace {

void check_id(const std::string& id) {
  if (id.empty()) throw Error(ErrorCode::InvalidPath, "empty entry id");
  if (id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    throw Error(ErrorCode::InvalidPath, "entry id contains a separator: " + id);
  }
}

}  // namespace

EntryPath::EntryPath(std::vector<std::string> ids) : ids_(std::move(ids)) {
  for (const auto& id : ids_) check_id(id);
}

EntryPath EntryPath::parse(std::string_view text) {
  std::vector<std::string> ids;
  if (text.empty()) return EntryPath{};
  std::size_t start = 0;
  while (true) {
    auto slash = text.find('/', start);
    ids.emplace_back(text.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return EntryPath(std::move(ids));
}

const std::string& EntryPath::leaf() const {
  if (ids_.empty()) throw Error(ErrorCode::InvalidPath, "root has no leaf id");
  return ids_.back();
}

EntryPath EntryPath::parent() const {
  if (ids_.empty()) throw Error(ErrorCode::InvalidPath, "root has no parent");
  return prefix(ids_.size() - 1);
}

EntryPath EntryPath::child(std::string id) const {
  check_id(id);
  EntryPath out;
  out.ids_.reserve(ids_.size() + 1);
  out.ids_ = ids_;
  out.ids_.push_back(std::move(id));
  return out;
}

EntryPath EntryPath::prefix(std::size_t depth) const {
  EntryPath out;
  out.ids_.assign(ids_.begin(), ids_.begin() + static_cast<std::ptrdiff_t>(std::min(depth, ids_.size())));
  return out;
}

bool EntryPath::is_prefix_of(const EntryPath& other) const noexcept {
  return ids_.size() <= other.ids_.size() && std::equal(ids_.begin(), ids_.end(), other.ids_.begin());
}

void EntryPath::validate_against(const GranularitySchema& schema) const {
  if (depth() > schema.leaf_depth()) {
    throw Error(ErrorCode::InvalidPath, "path " + str() + " deeper than schema");
  }
}

std::string EntryPath::str() const {
  std::string out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (i) out.push_back('/');
    out += ids_[i];
  }
  return out;
}

std::string to_string(const VirtualReplica& vr) {
  return vr.source_id + ":" + vr.path.str();
}

// --- ReplicaSetId --------------------------------------------------------------

ReplicaSetId ReplicaSetId::random() {
  std::array<std::uint8_t, kBytes> bytes{};
  random_bytes(bytes);
  return ReplicaSetId(bytes);
}

ReplicaSetId ReplicaSetId::parse(std::string_view hex) {
  if (hex.size() != kBytes * 2) {
    throw DeserializeError(0, "replicaset id must be 32 hex digits");
  }
  auto nibble = [&](std::size_t i) -> std::uint8_t {
    char c = hex[i];
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    throw DeserializeError(i, "bad hex digit in replicaset id");
  };
  std::array<std::uint8_t, kBytes> bytes{};
  for (std::size_t i = 0; i < kBytes; ++i) {
    bytes[i] = static_cast<std::uint8_t>(nibble(2 * i) << 4 | nibble(2 * i + 1));
  }
  return ReplicaSetId(bytes);
}

std::string ReplicaSetId::str() const { return to_hex(bytes_); }

// --- ReplicaSet ----------------------------------------------------------------

ReplicaSet ReplicaSet::create(std::string owner, std::vector<VirtualReplica> replicas,
                              Timestamp created_at) {
  ReplicaSet rs;
  rs.id = ReplicaSetId::random();
  rs.owner = std::move(owner);
  rs.replicas = std::move(replicas);
  rs.created_at = created_at;
  return normalize(std::move(rs));
}

std::vector<VirtualReplica> normalize_replicas(std::vector<VirtualReplica> replicas) {
  std::sort(replicas.begin(), replicas.end());
  // After sorting, every descendant of a kept replica follows it contiguously.
  std::vector<VirtualReplica> out;
  out.reserve(replicas.size());
  for (auto& vr : replicas) {
    if (!out.empty() && out.back().source_id == vr.source_id && out.back().path.is_prefix_of(vr.path)) {
      continue;
    }
    out.push_back(std::move(vr));
  }
  return out;
}

ReplicaSet normalize(ReplicaSet rs) {
  for (const auto& vr : rs.replicas) {
    if (vr.source_id.empty()) throw Error(ErrorCode::InvalidReplicaSet, "replica without source id");
  }
  rs.replicas = normalize_replicas(std::move(rs.replicas));
  if (rs.replicas.empty()) throw Error(ErrorCode::InvalidReplicaSet, "replicaset has no replicas");
  return rs;
}

bool covers(std::span<const VirtualReplica> replicas, std::string_view source_id,
            const EntryPath& path) {
  return std::any_of(replicas.begin(), replicas.end(), [&](const VirtualReplica& vr) {
    return vr.source_id == source_id && vr.path.is_prefix_of(path);
  });
}

bool covers(const ReplicaSet& rs, std::string_view source_id, const EntryPath& path) {
  return covers(std::span<const VirtualReplica>(rs.replicas), source_id, path);
}

std::vector<bool> presence_array(const ReplicaSet& rs, std::string_view source_id,
                                 const GranularitySchema& schema) {
  std::vector<bool> flags(schema.size(), false);
  bool found = false;
  for (const auto& vr : rs.replicas) {
    if (vr.source_id != source_id) continue;
    found = true;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      // Levels down to the replica's own depth hold its entry or ancestors;
      // a shallower pointer includes every finer level of its subtree.
      if (vr.path.depth() >= i + 1 || vr.path.depth() < i + 1) flags[i] = true;
    }
  }
  if (!found) {
    throw Error(ErrorCode::SourceNotInReplicaSet, std::string(source_id));
  }
  return flags;
}

// --- Attributes and queries ----------------------------------------------------

std::string to_string(const AttributeValue& value) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return std::to_string(v); }
    std::string operator()(Timestamp t) const { return "@" + std::to_string(t.ms); }
  };
  return std::visit(Visitor{}, value);
}

void MetadataRecord::validate() const {
  if (path.empty()) throw Error(ErrorCode::InvalidRecord, "record at source root");
  auto it = attributes.find("id");
  if (it == attributes.end()) throw Error(ErrorCode::InvalidRecord, path.str() + ": missing id");
  auto* id = std::get_if<std::string>(&it->second);
  if (!id || *id != path.leaf()) {
    throw Error(ErrorCode::InvalidRecord, path.str() + ": id does not match path");
  }
  if (size_bytes <= 0) throw Error(ErrorCode::InvalidRecord, path.str() + ": size_bytes must be > 0");
}

std::string_view to_string(CompareOp op) noexcept {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    case CompareOp::Contains: return "contains";
  }
  return "?";
}

std::optional<CompareOp> parse_compare_op(std::string_view text) noexcept {
  if (text == "=" || text == "==") return CompareOp::Eq;
  if (text == "!=" || text == "<>") return CompareOp::Ne;
  if (text == "<") return CompareOp::Lt;
  if (text == "<=") return CompareOp::Le;
  if (text == ">") return CompareOp::Gt;
  if (text == ">=") return CompareOp::Ge;
  if (text == "contains") return CompareOp::Contains;
  return std::nullopt;
}

namespace {

std::optional<std::partial_ordering> compare_values(const AttributeValue& lhs, const AttributeValue& rhs) {
  auto numeric = [](const AttributeValue& v) -> std::optional<double> {
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (auto* d = std::get_if<double>(&v)) return *d;
    return std::nullopt;
  };
  if (auto* ls = std::get_if<std::string>(&lhs)) {
    if (auto* rs = std::get_if<std::string>(&rhs)) return *ls <=> *rs;
    return std::nullopt;
  }
  if (auto* lt = std::get_if<Timestamp>(&lhs)) {
    if (auto* rt = std::get_if<Timestamp>(&rhs)) return lt->ms <=> rt->ms;
    if (auto* ri = std::get_if<std::int64_t>(&rhs)) return lt->ms <=> *ri;
    return std::nullopt;
  }
  auto* li = std::get_if<std::int64_t>(&lhs);
  auto* ri = std::get_if<std::int64_t>(&rhs);
  if (li && ri) return *li <=> *ri;
  auto ln = numeric(lhs);
  auto rn = numeric(rhs);
  if (ln && rn) return *ln <=> *rn;
  return std::nullopt;
}

}  // namespace

bool Predicate::matches(const Attributes& attributes) const {
  auto it = attributes.find(attribute);
  if (it == attributes.end()) return false;
  const AttributeValue& value = it->second;
  if (op == CompareOp::Contains) {
    auto* hay = std::get_if<std::string>(&value);
    auto* needle = std::get_if<std::string>(&literal);
    return hay && needle && hay->find(*needle) != std::string::npos;
  }
  auto cmp = compare_values(value, literal);
  if (!cmp || *cmp == std::partial_ordering::unordered) return false;
  switch (op) {
    case CompareOp::Eq: return *cmp == 0;
    case CompareOp::Ne: return *cmp != 0;
    case CompareOp::Lt: return *cmp < 0;
    case CompareOp::Le: return *cmp <= 0;
    case CompareOp::Gt: return *cmp > 0;
    case CompareOp::Ge: return *cmp >= 0;
    case CompareOp::Contains: break;
  }
  return false;
}

bool UserQuery::matches(const MetadataRecord& record) const {
  return std::all_of(predicates.begin(), predicates.end(),
                     [&](const Predicate& p) { return p.matches(record.attributes); });
}

std::size_t UserQuery::target_depth(const GranularitySchema& schema) const {
  auto depth = schema.depth_of(target_level);
  if (!depth) throw Error(ErrorCode::InvalidQuery, "unknown level '" + target_level + "'");
  return *depth;
}

}  // namespace obidos
