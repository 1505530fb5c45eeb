#pragma once

// JSON bodies of the service API: load reports, query outcomes, gc and share
// results, and error payloads.

#include "obidos/codec.hpp"
#include "obidos/error.hpp"
#include "obidos/etl.hpp"
#include "obidos/repository.hpp"
#include "obidos/sharing.hpp"

namespace obidos {

Json to_json(const TransferStats& stats);
TransferStats stats_from_json(const Json& j);

Json to_json(const LoadReport& report);
LoadReport report_from_json(const Json& j);

Json to_json(const QueryRow& row);
QueryRow row_from_json(const Json& j);

Json to_json(const QueryOutcome& outcome);
QueryOutcome outcome_from_json(const Json& j);

Json to_json(const GcResult& gc);
Json to_json(const ShareResult& result);

Json replicas_to_json(std::span<const VirtualReplica> replicas);
/// Throws DeserializeError.
std::vector<VirtualReplica> replicas_from_json(const Json& j);

/// {"code": "...", "message": "..."} for an error.
Json error_body(const Error& e);
/// Rebuilds the error carried by an error body.
Error error_from_body(const Json& j);

}  // namespace obidos
