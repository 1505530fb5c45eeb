#pragma once

// HTTP front end of an Instance. Every request carries an API key in the
// X-Api-Key header; bodies are JSON.

#include <memory>
#include <string>
#include <thread>

#include "obidos/instance.hpp"

namespace httplib {
class Server;
}

namespace obidos {

inline constexpr const char* kApiKeyHeader = "X-Api-Key";

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

class HttpService {
 public:
  explicit HttpService(Instance& instance);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  /// Throws ConfigError when the address is unavailable.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void serve();
  /// bind() plus serve() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  void routes();

  Instance& instance_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace obidos
