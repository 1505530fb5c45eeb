#pragma once

// HTTP client for the service API, and the sender connector built on it.

#include <memory>
#include <string>

#include "obidos/sharing.hpp"
#include "obidos/wire.hpp"

namespace httplib {
class Client;
class Result;
}

namespace obidos {

class ApiClient {
 public:
  /// `base_uri` is scheme://host:port. Throws ConfigError if malformed.
  ApiClient(const std::string& base_uri, std::string api_key);
  ~ApiClient();

  ApiClient(ApiClient&&) noexcept;
  ApiClient& operator=(ApiClient&&) noexcept;

  /// Each call returns the decoded body (null for empty bodies). Error
  /// responses are rethrown as Error with the server's code; connection
  /// failures as SenderUnavailable.
  Json get(const std::string& path);
  Json post(const std::string& path, const Json& body);
  Json post_raw(const std::string& path, const std::string& body);
  Json put(const std::string& path, const Json& body);
  Json del(const std::string& path);

  /// Status of the last response (0 if none arrived).
  int last_status() const noexcept { return last_status_; }

 private:
  Json finish(httplib::Result result);

  std::string base_uri_;
  std::string api_key_;
  std::unique_ptr<httplib::Client> client_;
  int last_status_ = 0;
};

/// A sender reached over HTTP.
class HttpSender final : public SenderClient {
 public:
  explicit HttpSender(std::string base_uri) : base_uri_(std::move(base_uri)) {}

  ReplicaSet get_replicaset(const ReplicaSetId& id, const std::string& api_key) override;
  QueryOutcome query(const ReplicaSetId& id, const UserQuery& q, const std::string& api_key) override;

 private:
  std::string base_uri_;
};

SenderConnector http_connector();

}  // namespace obidos
