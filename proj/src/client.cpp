#include "obidos/client.hpp"

#include <httplib.h>

namespace obidos {

namespace {

constexpr const char* kJson = "application/json";

}  // namespace

ApiClient::ApiClient(const std::string& base_uri, std::string api_key)
    : base_uri_(base_uri), api_key_(std::move(api_key)) {
  if (!base_uri_.starts_with("http://")) throw Error(ErrorCode::ConfigError, "unsupported URI " + base_uri_);
  client_ = std::make_unique<httplib::Client>(base_uri_);
  if (!client_->is_valid()) throw Error(ErrorCode::ConfigError, "malformed URI " + base_uri_);
  client_->set_default_headers({{"X-Api-Key", api_key_}});
  client_->set_connection_timeout(std::chrono::seconds(5));
  client_->set_read_timeout(std::chrono::minutes(10));
}

ApiClient::~ApiClient() = default;
ApiClient::ApiClient(ApiClient&&) noexcept = default;
ApiClient& ApiClient::operator=(ApiClient&&) noexcept = default;

Json ApiClient::finish(httplib::Result result) {
  if (!result) {
    last_status_ = 0;
    throw Error(ErrorCode::SenderUnavailable,
                "cannot reach " + base_uri_ + " (" + httplib::to_string(result.error()) + ")");
  }
  last_status_ = result->status;
  Json body;
  if (!result->body.empty()) {
    try {
      body = Json::parse(result->body);
    } catch (const Json::exception&) {
      body = Json{{"message", result->body}};
    }
  }
  if (result->status >= 400) {
    if (body.is_object() && body.contains("code")) throw error_from_body(body);
    throw Error(result->status == 404 ? ErrorCode::UnknownReplicaSet : ErrorCode::SenderUnavailable,
                "HTTP " + std::to_string(result->status));
  }
  return body;
}

Json ApiClient::get(const std::string& path) { return finish(client_->Get(path)); }

Json ApiClient::post(const std::string& path, const Json& body) { return post_raw(path, canonical(body)); }

Json ApiClient::post_raw(const std::string& path, const std::string& body) {
  return finish(client_->Post(path, body, kJson));
}

Json ApiClient::put(const std::string& path, const Json& body) {
  return finish(client_->Put(path, canonical(body), kJson));
}

Json ApiClient::del(const std::string& path) { return finish(client_->Delete(path)); }

ReplicaSet HttpSender::get_replicaset(const ReplicaSetId& id, const std::string& api_key) {
  ApiClient client(base_uri_, api_key);
  Json body = client.get("/replicasets/" + id.str() + "?refresh=false");
  return replicaset_from_json(body.at("replicaset"));
}

QueryOutcome HttpSender::query(const ReplicaSetId& id, const UserQuery& q, const std::string& api_key) {
  ApiClient client(base_uri_, api_key);
  return outcome_from_json(client.post("/remote/query", Json{{"query", to_json(q)}, {"replicaset_id", id.str()}}));
}

SenderConnector http_connector() {
  return [](const std::string& uri) -> std::shared_ptr<SenderClient> { return std::make_shared<HttpSender>(uri); };
}

}  // namespace obidos
