#include "obidos/codec.hpp"

#include <cctype>
#include <charconv>

#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace obidos {

namespace {

constexpr const char* kTimestampKey = "$ts";

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw DeserializeError(0, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw DeserializeError(0, std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) throw DeserializeError(0, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t int_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer()) throw DeserializeError(0, std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

template <typename Fn>
auto rethrow_as_deserialize(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DeserializeError&) {
    throw;
  } catch (const Error& e) {
    throw DeserializeError(0, e.what());
  } catch (const Json::exception& e) {
    throw DeserializeError(0, e.what());
  }
}

}  // namespace

Json parse_json(std::string_view bytes) {
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw DeserializeError(e.byte, e.what());
  }
}

std::string canonical(const Json& j) { return j.dump(); }

Json to_json(const AttributeValue& value) {
  struct Visitor {
    Json operator()(const std::string& s) const { return s; }
    Json operator()(std::int64_t v) const { return v; }
    Json operator()(double v) const { return v; }
    Json operator()(Timestamp t) const { return Json{{kTimestampKey, t.ms}}; }
  };
  return std::visit(Visitor{}, value);
}

AttributeValue attribute_from_json(const Json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_object() && j.size() == 1 && j.contains(kTimestampKey)) return Timestamp{int_field(j, kTimestampKey)};
  throw DeserializeError(0, "attribute values must be scalars");
}

Json to_json(const VirtualReplica& vr) { return Json{{"path", vr.path.str()}, {"source", vr.source_id}}; }

VirtualReplica replica_from_json(const Json& j) {
  return rethrow_as_deserialize([&] {
    return VirtualReplica{string_field(j, "source"), EntryPath::parse(string_field(j, "path"))};
  });
}

Json to_json(const ReplicaSet& rs) {
  Json replicas = Json::array();
  for (const auto& vr : rs.replicas) replicas.push_back(to_json(vr));
  Json j{{"created_at", rs.created_at.ms}, {"id", rs.id.str()}, {"owner", rs.owner}, {"replicas", std::move(replicas)}};
  if (rs.last_loaded_at) j["last_loaded_at"] = rs.last_loaded_at->ms;
  return j;
}

ReplicaSet replicaset_from_json(const Json& j) {
  return rethrow_as_deserialize([&] {
    ReplicaSet rs;
    rs.id = ReplicaSetId::parse(string_field(j, "id"));
    rs.owner = string_field(j, "owner");
    rs.created_at = Timestamp{int_field(j, "created_at")};
    if (j.contains("last_loaded_at")) rs.last_loaded_at = Timestamp{int_field(j, "last_loaded_at")};
    const Json& replicas = field(j, "replicas");
    if (!replicas.is_array()) throw DeserializeError(0, "replicas must be an array");
    for (const auto& r : replicas) rs.replicas.push_back(replica_from_json(r));
    if (rs.replicas.empty()) throw DeserializeError(0, "replicaset has no replicas");
    return rs;
  });
}

std::string serialize_replicaset(const ReplicaSet& rs) {
  if (rs.replicas.empty()) throw Error(ErrorCode::InvalidReplicaSet, "cannot serialize an empty replicaset");
  return canonical(to_json(rs));
}

ReplicaSet deserialize_replicaset(std::string_view bytes) { return replicaset_from_json(parse_json(bytes)); }

Json to_json(const MetadataRecord& record) {
  Json attrs = Json::object();
  for (const auto& [name, value] : record.attributes) attrs[name] = to_json(value);
  Json j{{"attributes", std::move(attrs)},
         {"last_modified", record.last_modified.ms},
         {"path", record.path.str()},
         {"size_bytes", record.size_bytes}};
  if (record.blob_ref) j["blob_ref"] = *record.blob_ref;
  return j;
}

MetadataRecord record_from_json(const Json& j) {
  return rethrow_as_deserialize([&] {
    MetadataRecord r;
    r.path = EntryPath::parse(string_field(j, "path"));
    r.last_modified = Timestamp{int_field(j, "last_modified")};
    r.size_bytes = int_field(j, "size_bytes");
    const Json& attrs = field(j, "attributes");
    if (!attrs.is_object()) throw DeserializeError(0, "attributes must be an object");
    for (const auto& [name, value] : attrs.items()) r.attributes.emplace(name, attribute_from_json(value));
    if (j.contains("blob_ref")) r.blob_ref = string_field(j, "blob_ref");
    return r;
  });
}

std::string record_content_hash(const MetadataRecord& record) {
  Json j = to_json(record);
  j.erase("blob_ref");
  j.erase("size_bytes");
  return sha256_hex(canonical(j));
}

Json to_json(const UserQuery& q) {
  Json preds = Json::array();
  for (const auto& p : q.predicates) {
    preds.push_back(Json{{"attribute", p.attribute}, {"op", std::string(to_string(p.op))}, {"value", to_json(p.literal)}});
  }
  return Json{{"include_binary", q.include_binary}, {"predicates", std::move(preds)}, {"target_level", q.target_level}};
}

UserQuery query_from_json(const Json& j) {
  return rethrow_as_deserialize([&] {
    UserQuery q;
    q.target_level = string_field(j, "target_level");
    if (j.contains("include_binary")) q.include_binary = field(j, "include_binary").get<bool>();
    if (j.contains("predicates")) {
      for (const auto& p : field(j, "predicates")) {
        auto op = parse_compare_op(string_field(p, "op"));
        if (!op) throw DeserializeError(0, "unknown operator " + string_field(p, "op"));
        q.predicates.push_back({string_field(p, "attribute"), *op, attribute_from_json(field(p, "value"))});
      }
    }
    return q;
  });
}

Json to_json(const GranularitySchema& schema) { return Json(schema.levels); }

GranularitySchema schema_from_json(const Json& j) {
  return rethrow_as_deserialize([&] {
    GranularitySchema s{j.get<std::vector<std::string>>()};
    s.validate();
    return s;
  });
}

VirtualReplica parse_replica(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::InvalidPath, "expected source:path, got '" + std::string(text) + "'");
  }
  return VirtualReplica{std::string(text.substr(0, colon)), EntryPath::parse(text.substr(colon + 1))};
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

AttributeValue literal_of(std::string_view text) {
  if (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') && text.back() == text.front()) {
    return std::string(text.substr(1, text.size() - 2));
  }
  if (!text.empty() && text.front() == '@') {
    std::int64_t ms = 0;
    auto [end, ec] = std::from_chars(text.data() + 1, text.data() + text.size(), ms);
    if (ec != std::errc{} || end != text.data() + text.size()) {
      throw Error(ErrorCode::InvalidQuery, "bad timestamp literal '" + std::string(text) + "'");
    }
    return Timestamp{ms};
  }
  std::int64_t i = 0;
  if (auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
      ec == std::errc{} && end == text.data() + text.size()) {
    return i;
  }
  double d = 0;
  if (auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), d);
      ec == std::errc{} && end == text.data() + text.size()) {
    return d;
  }
  return std::string(text);
}

}  // namespace

Predicate parse_predicate(std::string_view text) {
  text = trim(text);
  std::size_t name_end = 0;
  while (name_end < text.size() &&
         (std::isalnum(static_cast<unsigned char>(text[name_end])) || text[name_end] == '_' || text[name_end] == '.')) {
    ++name_end;
  }
  if (name_end == 0) throw Error(ErrorCode::InvalidQuery, "predicate needs an attribute name: '" + std::string(text) + "'");
  std::string attribute(text.substr(0, name_end));
  std::string_view rest = trim(text.substr(name_end));

  // Longest operator first so "<=" is not read as "<".
  for (std::string_view op : {"contains", "==", "!=", "<>", "<=", ">=", "=", "<", ">"}) {
    if (!rest.starts_with(op)) continue;
    std::string_view value = trim(rest.substr(op.size()));
    if (value.empty()) throw Error(ErrorCode::InvalidQuery, "predicate needs a value: '" + std::string(text) + "'");
    return Predicate{std::move(attribute), *parse_compare_op(op), literal_of(value)};
  }
  throw Error(ErrorCode::InvalidQuery, "no comparison operator in '" + std::string(text) + "'");
}

}  // namespace obidos
