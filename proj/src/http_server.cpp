#include "priorloom/http_server.hpp"

#include <httplib.h>

#include "priorloom/errors.hpp"

namespace priorloom {
namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kJsonl = "application/x-ndjson";

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), kJson);
}

// Maps library exceptions to HTTP statuses.
template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("bad json: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

nlohmann::json parse_object(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return nlohmann::json::object();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("request body is not valid json: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("request body must be a json object");
  return doc;
}

}  // namespace

struct HttpServer::Impl {
  SessionService& service;
  ServerOptions options;
  httplib::Server server;
  int bound_port = -1;

  Impl(SessionService& s, ServerOptions o) : service(s), options(std::move(o)) {}
};

HttpServer::HttpServer(SessionService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.set_read_timeout(impl_->options.timeout_seconds, 0);
  srv.set_write_timeout(impl_->options.timeout_seconds, 0);

  srv.Get("/datasets", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : svc.datasets()) out.push_back(to_json(d));
    res.set_content(out.dump(), kJson);
  }));

  srv.Post("/datasets", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto doc = parse_object(req.body);
    if (!doc.contains("path") || !doc["path"].is_string()) throw ValidationError("\"path\" is required");
    std::optional<std::string> id;
    if (doc.contains("id")) id = doc["id"].get<std::string>();
    res.set_content(to_json(svc.register_dataset(doc["path"].get<std::string>(), id)).dump(), kJson);
  }));

  srv.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto doc = parse_object(req.body);
    if (!doc.contains("dataset") || !doc["dataset"].is_string()) throw ValidationError("\"dataset\" is required");
    const SessionConfig cfg = doc.contains("config") ? session_config_from_json(doc["config"]) : SessionConfig{};
    const auto created = svc.create_session(doc["dataset"].get<std::string>(), cfg);
    nlohmann::json layout = nlohmann::json::array();
    const std::string lines = layout_to_jsonl(created.layout, created.names);
    std::size_t start = 0;
    while (start < lines.size()) {
      const auto end = lines.find('\n', start);
      layout.push_back(nlohmann::json::parse(lines.substr(start, end - start)));
      start = end + 1;
    }
    res.set_content(nlohmann::json{{"id", created.id}, {"round", created.round}, {"layout", layout}}.dump(), kJson);
  }));

  srv.Get(R"(/sessions/([^/]+)/layout)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto layout = svc.layout(id);
    res.set_content(layout_to_jsonl(layout, svc.feature_names(id)), kJsonl);
  }));

  srv.Post(R"(/sessions/([^/]+)/feedback)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const int round = svc.post_feedback(req.matches[1], parse_feedback_body(req.body));
    res.set_content(nlohmann::json{{"round", round}}.dump(), kJson);
  }));

  srv.Post(R"(/sessions/([^/]+)/refresh)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto layout = svc.refresh(id);
    res.set_content(layout_to_jsonl(layout, svc.feature_names(id)), kJsonl);
  }));

  srv.Get(R"(/sessions/([^/]+)/metrics)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> test;
    if (req.has_param("test")) test = req.get_param_value("test");
    res.set_content(to_json(svc.metrics(req.matches[1], test)).dump(), kJson);
  }));

  srv.Post(R"(/sessions/([^/]+)/snapshot)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto doc = parse_object(req.body);
    std::optional<std::filesystem::path> dir;
    if (doc.contains("dir")) dir = doc["dir"].get<std::string>();
    const auto path = svc.snapshot(req.matches[1], dir);
    res.set_content(nlohmann::json{{"dir", path.string()}}.dump(), kJson);
  }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& impl = *impl_;
  if (impl.options.port == 0) {
    impl.bound_port = impl.server.bind_to_any_port(impl.options.host);
  } else if (impl.server.bind_to_port(impl.options.host, impl.options.port)) {
    impl.bound_port = impl.options.port;
  } else {
    impl.bound_port = -1;
  }
  if (impl.bound_port < 0)
    throw std::runtime_error("cannot bind " + impl.options.host + ":" + std::to_string(impl.options.port));
  return impl.bound_port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace priorloom
