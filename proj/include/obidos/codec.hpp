#pragma once

// Canonical structured-text encodings of model types. Objects are emitted with
// sorted keys and no whitespace, so each logical value has one byte form.

#include <string>
#include <string_view>

#include <json.hpp>

#include "obidos/model.hpp"

namespace obidos {

using Json = nlohmann::json;

Json to_json(const AttributeValue& value);
AttributeValue attribute_from_json(const Json& j);

Json to_json(const VirtualReplica& vr);
VirtualReplica replica_from_json(const Json& j);

Json to_json(const ReplicaSet& rs);
ReplicaSet replicaset_from_json(const Json& j);

std::string serialize_replicaset(const ReplicaSet& rs);
/// Throws DeserializeError (with byte offset) on malformed input or an empty
/// replica list.
ReplicaSet deserialize_replicaset(std::string_view bytes);

Json to_json(const MetadataRecord& record);
MetadataRecord record_from_json(const Json& j);

/// Hash over path, attributes and last_modified; blob_ref and size_bytes are
/// storage details and excluded.
std::string record_content_hash(const MetadataRecord& record);

Json to_json(const UserQuery& q);
UserQuery query_from_json(const Json& j);

Json to_json(const GranularitySchema& schema);
GranularitySchema schema_from_json(const Json& j);

/// "source:path" (path may be empty for a whole source). Throws InvalidPath.
VirtualReplica parse_replica(std::string_view text);

/// "attribute op value", e.g. "modality = CT", "age >= 40",
/// "study_date < @1600000000000". Integers and decimals become numbers, a
/// leading @ marks a millisecond timestamp, and quotes force a string.
/// Throws InvalidQuery.
Predicate parse_predicate(std::string_view text);

/// Parses JSON text, mapping parse failures to DeserializeError.
Json parse_json(std::string_view bytes);

std::string canonical(const Json& j);

}  // namespace obidos
