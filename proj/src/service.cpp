#include "obidos/service.hpp"

#include <httplib.h>

#include "obidos/wire.hpp"

namespace obidos {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownReplicaSet:
    case ErrorCode::PathNotFound:
    case ErrorCode::BlobNotFound:
      return 404;
    case ErrorCode::DuplicateReplicaSet:
      return 409;
    case ErrorCode::AccessDenied:
      return 403;
    case ErrorCode::SourceUnavailable:
    case ErrorCode::SenderUnavailable:
    case ErrorCode::ShareFailed:
      return 502;
    case ErrorCode::JournalCorrupt:
      return 500;
    default:
      return 422;
  }
}

namespace {

using Request = httplib::Request;
using Response = httplib::Response;

struct Reply {
  int status = 200;
  Json body;
};

using Handler = std::function<Reply(const Request&, const ApiKey&)>;

void send(Response& res, int status, const Json& body) {
  res.status = status;
  if (!body.is_null()) res.set_content(canonical(body), "application/json");
}

Json body_of(const Request& req) {
  if (req.body.empty()) return Json::object();
  Json j = parse_json(req.body);
  if (!j.is_object()) throw DeserializeError(0, "request body must be an object");
  return j;
}

ReplicaSetId path_id(const Request& req) { return ReplicaSetId::parse(req.matches[1].str()); }

void require_owner(const ApiKey& key) {
  if (!key.owner) throw Error(ErrorCode::AccessDenied, "key is limited to shared replicasets");
}

LoadOptions load_options(const Json& body) { return LoadOptions{body.value("force_load", false)}; }

Json load_json(const LoadResult& load) {
  return Json{{"outcome", to_json(load.outcome)}, {"report", to_json(load.report)}};
}

}  // namespace

HttpService::HttpService(Instance& instance) : instance_(instance), server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::routes() {
  auto guarded = [this](Handler handler) {
    return [this, handler](const Request& req, Response& res) {
      // Authentication happens before anything else looks at the request.
      auto key = instance_.keys().authenticate(req.get_header_value(kApiKeyHeader));
      if (!key) {
        send(res, 401, Json{{"code", "AccessDenied"}, {"message", "missing or invalid API key"}});
        return;
      }
      try {
        Reply reply = handler(req, *key);
        send(res, reply.status, reply.body);
      } catch (const LoadAborted& e) {
        Json body = error_body(e);
        body["partial"] = to_json(e.partial());
        send(res, http_status(e.code()), body);
      } catch (const Error& e) {
        send(res, http_status(e.code()), error_body(e));
      } catch (const Json::exception& e) {
        send(res, 422, error_body(DeserializeError(0, e.what())));
      } catch (const std::exception& e) {
        send(res, 500, Json{{"code", "Internal"}, {"message", e.what()}});
      }
    };
  };

  const std::string id = R"(/replicasets/([0-9a-fA-F]{32}))";

  server_->Post("/replicasets", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    Json body = body_of(req);
    auto replicas = replicas_from_json(body.at("replicas"));
    std::optional<UserQuery> q;
    if (body.contains("query") && !body.at("query").is_null()) q = query_from_json(body.at("query"));
    std::optional<ReplicaSetId> chosen;
    if (body.contains("id")) chosen = ReplicaSetId::parse(body.at("id").get<std::string>());
    auto [rs, load] = instance_.create_replicaset(key.user, std::move(replicas), q, load_options(body), chosen);
    Json out = load_json(load);
    out["replicaset"] = to_json(rs);
    return Reply{201, std::move(out)};
  }));

  server_->Get(id, guarded([this](const Request& req, const ApiKey& key) {
    const ReplicaSetId rsid = path_id(req);
    if (!key.owner || !instance_.holder().holds(key.user, rsid)) {
      if (key.owner) {
        if (auto binding = instance_.sharing().binding(rsid); binding && binding->user == key.user) {
          return Reply{200, Json{{"remote", true}, {"replicaset", to_json(binding->replicaset)}}};
        }
        throw Error(ErrorCode::UnknownReplicaSet, "unknown replicaset");
      }
      // Read-only access for keys granted on this replicaset.
      return Reply{200, Json{{"replicaset", to_json(instance_.sender_get(rsid, key.token))}}};
    }
    ReplicaSetView view = instance_.retrieve_replicaset(key.user, rsid, req.get_param_value("refresh") != "false");
    Json out{{"loaded", view.loaded}, {"outcome", to_json(view.outcome)}, {"replicaset", to_json(view.replicaset)}};
    if (view.query) out["query"] = to_json(*view.query);
    if (view.refresh) out["refresh"] = to_json(*view.refresh);
    return Reply{200, std::move(out)};
  }));

  server_->Put(id, guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    Json body = body_of(req);
    UpdateResult result = instance_.update_replicaset(key.user, path_id(req), replicas_from_json(body.at("replicas")));
    Json out = load_json(result.load);
    out["replicaset"] = to_json(result.replicaset);
    out["added"] = replicas_to_json(result.added);
    out["removed"] = replicas_to_json(result.removed);
    return Reply{200, std::move(out)};
  }));

  server_->Delete(id, guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    instance_.delete_replicaset(key.user, path_id(req));
    return Reply{204, Json()};
  }));

  server_->Post(id + "/envelope", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    Json body = body_of(req);
    const std::string kind = body.value("kind", std::string("id"));
    if (kind != "id" && kind != "full") throw DeserializeError(0, "kind must be 'id' or 'full'");
    ShareEnvelope envelope =
        instance_.make_envelope(key.user, path_id(req), kind == "id" ? EnvelopeKind::IdOnly : EnvelopeKind::Full,
                                body.at("receiver_user").get<std::string>(), body.value("access", false));
    return Reply{200, parse_json(serialize_envelope(envelope))};
  }));

  server_->Post(id + "/materialize", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    return Reply{200, load_json(instance_.materialize_binding(key.user, path_id(req)))};
  }));

  server_->Post("/query", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    Json body = body_of(req);
    const ReplicaSetId rsid = ReplicaSetId::parse(body.at("replicaset_id").get<std::string>());
    QueryResult result = instance_.query(key.user, rsid, query_from_json(body.at("query")), load_options(body));
    Json out = load_json(result.load);
    out["remote"] = result.remote;
    return Reply{200, std::move(out)};
  }));

  server_->Post("/share", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    ShareEnvelope envelope = deserialize_envelope(req.body);
    if (envelope.receiver_user != key.user) {
      throw Error(ErrorCode::AccessDenied, "envelope is addressed to another user");
    }
    return Reply{200, to_json(instance_.share(envelope))};
  }));

  server_->Post("/gc", guarded([this](const Request&, const ApiKey& key) {
    require_owner(key);
    return Reply{200, to_json(instance_.gc())};
  }));

  server_->Post("/grants", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    Json body = body_of(req);
    AccessGrant grant =
        instance_.issue_grant(key.user, ReplicaSetId::parse(body.at("replicaset_id").get<std::string>()));
    return Reply{201, to_json(grant)};
  }));

  server_->Delete(R"(/grants/([0-9a-fA-F]+))", guarded([this](const Request& req, const ApiKey& key) {
    require_owner(key);
    auto target = instance_.keys().authenticate(req.matches[1].str());
    if (!target || target->owner || target->user != key.user) {
      throw Error(ErrorCode::UnknownReplicaSet, "no such grant");
    }
    instance_.keys().revoke(target->token);
    return Reply{204, Json()};
  }));

  server_->Post("/remote/query", guarded([this](const Request& req, const ApiKey& key) {
    Json body = body_of(req);
    const ReplicaSetId rsid = ReplicaSetId::parse(body.at("replicaset_id").get<std::string>());
    return Reply{200, to_json(instance_.sender_query(rsid, query_from_json(body.at("query")), key.token))};
  }));
}

int HttpService::bind(const std::string& host, int port) {
  // The library default adds SO_REUSEPORT, which lets a second instance share
  // the port and silently split traffic. A clash must fail instead.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::ConfigError, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::serve() { server_->listen_after_bind(); }

int HttpService::start(const std::string& host, int port) {
  int bound = bind(host, port);
  thread_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
  return bound;
}

void HttpService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace obidos
