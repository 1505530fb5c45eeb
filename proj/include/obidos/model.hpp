#pragma once

// Hierarchical dataset schema, entry addressing, replicasets and queries.

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace obidos {

/// Milliseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t ms = 0;

  auto operator<=>(const Timestamp&) const = default;
};

Timestamp now();

/// Ordered level names of a hierarchical source. Entries at depth d (1-based)
/// belong to level d-1; entries one level below the last named level are the
/// leaf payloads (images), addressed with the implicit level name "image".
struct GranularitySchema {
  static constexpr std::string_view kLeafLevel = "image";

  std::vector<std::string> levels;

  /// collection, patient, study, series.
  static GranularitySchema medical();

  std::size_t size() const noexcept { return levels.size(); }
  std::size_t leaf_depth() const noexcept { return levels.size() + 1; }

  /// Depth of entries at `level`, 1..n+1, or nullopt if the name is unknown.
  std::optional<std::size_t> depth_of(std::string_view level) const;
  std::string level_at(std::size_t depth) const;

  /// Throws InvalidPath on empty or duplicate names.
  void validate() const;

  bool operator==(const GranularitySchema&) const = default;
};

/// Position in a source hierarchy as a sequence of entry ids, one per level.
/// Depth 0 addresses the whole source.
class EntryPath {
 public:
  EntryPath() = default;
  explicit EntryPath(std::vector<std::string> ids);
  EntryPath(std::initializer_list<std::string> ids) : EntryPath(std::vector<std::string>(ids)) {}

  /// Parses "C1/P1/S1"; the empty string is the root.
  static EntryPath parse(std::string_view text);

  std::size_t depth() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::span<const std::string> segments() const noexcept { return ids_; }
  const std::string& leaf() const;

  EntryPath parent() const;
  EntryPath child(std::string id) const;
  /// Prefix of length `depth`.
  EntryPath prefix(std::size_t depth) const;

  /// True if this path equals `other` or is one of its ancestors.
  bool is_prefix_of(const EntryPath& other) const noexcept;
  bool is_strict_prefix_of(const EntryPath& other) const noexcept {
    return depth() < other.depth() && is_prefix_of(other);
  }

  /// Throws InvalidPath when deeper than the schema's leaf depth.
  void validate_against(const GranularitySchema& schema) const;

  std::string str() const;

  auto operator<=>(const EntryPath&) const = default;
  bool operator==(const EntryPath&) const = default;

 private:
  std::vector<std::string> ids_;
};

/// A pointer to one subtree of one source.
struct VirtualReplica {
  std::string source_id;
  EntryPath path;

  auto operator<=>(const VirtualReplica&) const = default;
  bool operator==(const VirtualReplica&) const = default;
};

std::string to_string(const VirtualReplica& vr);

class ReplicaSetId {
 public:
  static constexpr std::size_t kBytes = 16;

  ReplicaSetId() = default;
  explicit ReplicaSetId(const std::array<std::uint8_t, kBytes>& bytes) : bytes_(bytes) {}

  static ReplicaSetId random();
  /// 32 lowercase hex digits; throws DeserializeError otherwise.
  static ReplicaSetId parse(std::string_view hex);

  std::string str() const;
  const std::array<std::uint8_t, kBytes>& bytes() const noexcept { return bytes_; }

  auto operator<=>(const ReplicaSetId&) const = default;
  bool operator==(const ReplicaSetId&) const = default;

 private:
  std::array<std::uint8_t, kBytes> bytes_{};
};

struct ReplicaSet {
  ReplicaSetId id;
  std::string owner;
  std::vector<VirtualReplica> replicas;
  Timestamp created_at;
  std::optional<Timestamp> last_loaded_at;

  /// Creates a fresh replicaset with a random id, normalized.
  static ReplicaSet create(std::string owner, std::vector<VirtualReplica> replicas,
                           Timestamp created_at = now());

  bool operator==(const ReplicaSet&) const = default;
};

/// Drops replicas that lie inside another replica of the same source and sorts
/// the remainder. Throws InvalidReplicaSet if nothing is left.
ReplicaSet normalize(ReplicaSet rs);

/// Prefix elimination on a bare replica list (no emptiness check).
std::vector<VirtualReplica> normalize_replicas(std::vector<VirtualReplica> replicas);

bool covers(const ReplicaSet& rs, std::string_view source_id, const EntryPath& path);
bool covers(std::span<const VirtualReplica> replicas, std::string_view source_id,
            const EntryPath& path);

/// Per-level presence flags of `source_id` within `rs`. Throws
/// SourceNotInReplicaSet if the source does not appear.
std::vector<bool> presence_array(const ReplicaSet& rs, std::string_view source_id,
                                 const GranularitySchema& schema);

using AttributeValue = std::variant<std::string, std::int64_t, double, Timestamp>;
using Attributes = std::map<std::string, AttributeValue, std::less<>>;

std::string to_string(const AttributeValue& value);

struct MetadataRecord {
  EntryPath path;
  Attributes attributes;
  Timestamp last_modified;
  std::int64_t size_bytes = 0;
  std::optional<std::string> blob_ref;

  /// Throws InvalidRecord unless "id" matches the last path segment and
  /// size_bytes is positive.
  void validate() const;

  bool operator==(const MetadataRecord&) const = default;
};

struct VirtualProxy {
  EntryPath path;
  Timestamp discovered_at;

  bool operator==(const VirtualProxy&) const = default;
};

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge, Contains };

std::string_view to_string(CompareOp op) noexcept;
std::optional<CompareOp> parse_compare_op(std::string_view text) noexcept;

struct Predicate {
  std::string attribute;
  CompareOp op = CompareOp::Eq;
  AttributeValue literal;

  /// Missing attributes and incomparable types never match.
  bool matches(const Attributes& attributes) const;

  bool operator==(const Predicate&) const = default;
};

struct UserQuery {
  std::string target_level;
  std::vector<Predicate> predicates;
  bool include_binary = false;

  bool matches(const MetadataRecord& record) const;
  /// Throws InvalidQuery if the target level is not in the schema.
  std::size_t target_depth(const GranularitySchema& schema) const;

  bool operator==(const UserQuery&) const = default;
};

}  // namespace obidos
