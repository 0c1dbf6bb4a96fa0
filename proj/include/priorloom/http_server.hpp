#pragma once

#include <memory>
#include <string>

#include "priorloom/service.hpp"

namespace priorloom {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int timeout_seconds = 120;
};

// HTTP front end over a SessionService:
//   POST /datasets                  {"path": ..., "id": optional}
//   GET  /datasets
//   POST /sessions                  {"dataset": ..., "config": optional}
//   GET  /sessions/{id}/layout      jsonl
//   POST /sessions/{id}/feedback    jsonl (or json array) -> {"round": n}
//   POST /sessions/{id}/refresh     jsonl layout
//   GET  /sessions/{id}/metrics[?test=dataset]
//   POST /sessions/{id}/snapshot    {"dir": optional}
// Errors are {"error": message} with 400 (bad input), 404 (unknown id) or 500.
class HttpServer {
public:
  HttpServer(SessionService& service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds the socket; returns the bound port. Throws on failure.
  int bind();
  // Serves until stop(); call bind() first.
  void listen();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace priorloom
