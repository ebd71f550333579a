#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "latentwarp/backends.hpp"
#include "latentwarp/pipeline.hpp"

namespace latentwarp {

struct ServiceOptions {
  PipelineConfig base_config;
  std::optional<std::filesystem::path> data_dir;  // session records persisted here when set
  bool serialize_backends = true;                  // funnel all sessions through one backend queue
};

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent session API. Each method maps to one endpoint:
///   POST   /sessions               create_session
///   POST   /sessions/{id}/step     step
///   GET    /sessions/{id}          get_session
///   GET    /sessions/{id}/frames/n get_frame
///   DELETE /sessions/{id}          delete_session
/// Steps on one session never overlap: a second step while one is running
/// is answered with 409.
class SessionService {
 public:
  SessionService(BackendSuite backends, ServiceOptions options);
  ~SessionService();

  HttpReply create_session(const std::string& body);
  HttpReply step(const std::string& id, const std::string& body);
  HttpReply get_session(const std::string& id) const;
  HttpReply get_frame(const std::string& id, int index) const;
  HttpReply delete_session(const std::string& id);

  std::size_t session_count() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_session_id();

  Pipeline pipeline_;
  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP front end for a SessionService.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks the calling thread.
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace latentwarp
