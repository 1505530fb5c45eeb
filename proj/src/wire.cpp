#include "obidos/wire.hpp"

namespace obidos {

Json to_json(const TransferStats& s) {
  return Json{{"blob_bytes", s.blob_bytes},
              {"blob_requests", s.blob_requests},
              {"listing_requests", s.listing_requests},
              {"metadata_bytes", s.metadata_bytes},
              {"metadata_requests", s.metadata_requests}};
}

TransferStats stats_from_json(const Json& j) {
  TransferStats s;
  s.blob_bytes = j.at("blob_bytes").get<std::uint64_t>();
  s.blob_requests = j.at("blob_requests").get<std::uint64_t>();
  s.listing_requests = j.at("listing_requests").get<std::uint64_t>();
  s.metadata_bytes = j.at("metadata_bytes").get<std::uint64_t>();
  s.metadata_requests = j.at("metadata_requests").get<std::uint64_t>();
  return s;
}

Json to_json(const LoadReport& r) {
  Json transfer = Json::object();
  for (const auto& [source, stats] : r.transfer) transfer[source] = to_json(stats);
  return Json{{"blobs_loaded", r.blobs_loaded},
              {"elapsed_ns", r.elapsed.count()},
              {"proxies_created", r.proxies_created},
              {"query_rows", r.query_rows},
              {"records_promoted", r.records_promoted},
              {"served_from_repository", r.served_from_repository},
              {"total", to_json(r.total())},
              {"transfer", std::move(transfer)}};
}

LoadReport report_from_json(const Json& j) {
  LoadReport r;
  for (const auto& [source, stats] : j.at("transfer").items()) r.transfer[source] = stats_from_json(stats);
  r.blobs_loaded = j.at("blobs_loaded").get<std::size_t>();
  r.elapsed = std::chrono::nanoseconds(j.at("elapsed_ns").get<std::int64_t>());
  r.proxies_created = j.at("proxies_created").get<std::size_t>();
  r.query_rows = j.at("query_rows").get<std::size_t>();
  r.records_promoted = j.at("records_promoted").get<std::size_t>();
  r.served_from_repository = j.at("served_from_repository").get<bool>();
  return r;
}

Json to_json(const QueryRow& row) { return Json{{"record", to_json(row.record)}, {"source", row.source_id}}; }

QueryRow row_from_json(const Json& j) {
  return QueryRow{j.at("source").get<std::string>(), record_from_json(j.at("record"))};
}

Json to_json(const QueryOutcome& o) {
  Json rows = Json::array();
  for (const auto& row : o.rows) rows.push_back(to_json(row));
  return Json{{"blob_refs_resolved", o.blob_refs_resolved}, {"complete", o.complete}, {"rows", std::move(rows)}};
}

QueryOutcome outcome_from_json(const Json& j) {
  QueryOutcome o;
  for (const auto& row : j.at("rows")) o.rows.push_back(row_from_json(row));
  o.complete = j.at("complete").get<bool>();
  o.blob_refs_resolved = j.at("blob_refs_resolved").get<bool>();
  return o;
}

Json to_json(const GcResult& gc) {
  return Json{{"blobs_removed", gc.blobs_removed}, {"entries_removed", gc.entries_removed}, {"removed", gc.total()}};
}

Json to_json(const ShareResult& r) {
  Json j{{"bytes_transferred", r.bytes_transferred},
         {"fetched_from_sender", r.fetched_from_sender},
         {"path", std::string(to_string(r.path))},
         {"replicaset_id", r.replicaset_id.str()}};
  if (r.report) j["report"] = to_json(*r.report);
  return j;
}

Json replicas_to_json(std::span<const VirtualReplica> replicas) {
  Json out = Json::array();
  for (const auto& vr : replicas) out.push_back(to_json(vr));
  return out;
}

std::vector<VirtualReplica> replicas_from_json(const Json& j) {
  if (!j.is_array()) throw DeserializeError(0, "replicas must be an array");
  std::vector<VirtualReplica> out;
  for (const auto& vr : j) out.push_back(replica_from_json(vr));
  return out;
}

Json error_body(const Error& e) {
  std::string message = e.what();
  const std::string prefix = std::string(to_string(e.code())) + ": ";
  if (message.starts_with(prefix)) message.erase(0, prefix.size());
  return Json{{"code", std::string(to_string(e.code()))}, {"message", message}};
}

Error error_from_body(const Json& j) {
  return Error(error_code_from_string(j.value("code", std::string{})), j.value("message", std::string{"request failed"}));
}

}  // namespace obidos
