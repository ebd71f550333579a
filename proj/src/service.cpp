#include "latentwarp/service.hpp"

#include <atomic>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "latentwarp/errors.hpp"
#include "latentwarp/image_io.hpp"
#include "latentwarp/serialization.hpp"
#include "latentwarp/session_store.hpp"

namespace latentwarp {

using nlohmann::json;

struct SessionService::Session {
  std::string id;
  std::atomic<bool> busy{false};
  mutable std::mutex mutex;  // guards everything below
  SessionState state;
  std::vector<std::vector<std::uint8_t>> frames_png;
  std::optional<SessionStore> store;
};

namespace {

HttpReply json_reply(int status, const json& body) { return HttpReply{status, "application/json", body.dump()}; }

HttpReply error_reply(int status, const std::string& message, const std::string& stage = {}) {
  json body = {{"error", message}};
  if (!stage.empty()) body["stage"] = stage;
  return json_reply(status, body);
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("request body is not valid JSON: ") + e.what());
  }
}

// Maps exceptions to status codes: client mistakes 400, pipeline failures 500.
template <typename F>
HttpReply guarded(F&& fn) {
  try {
    return fn();
  } catch (const StageError& e) {
    return error_reply(500, e.what(), e.stage());
  } catch (const ConfigError& e) {
    return error_reply(400, e.what());
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const json::exception& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what(), "internal");
  }
}

class BusyGuard {
 public:
  explicit BusyGuard(std::atomic<bool>& flag) : flag_(flag) {}
  ~BusyGuard() { flag_.store(false); }

 private:
  std::atomic<bool>& flag_;
};

}  // namespace

SessionService::SessionService(BackendSuite backends, ServiceOptions options)
    : pipeline_(options.serialize_backends ? serialize_backend_access(std::move(backends)) : std::move(backends)),
      options_(std::move(options)) {
  options_.base_config.validate();
  if (options_.data_dir) std::filesystem::create_directories(*options_.data_dir);
}

SessionService::~SessionService() = default;

std::string SessionService::new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char id[17];
  std::snprintf(id, sizeof(id), "%016llx", static_cast<unsigned long long>(rng()));
  return id;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionService::session_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return sessions_.size();
}

HttpReply SessionService::create_session(const std::string& body) {
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.is_object()) throw std::invalid_argument("request body must be a JSON object");
    SessionStart start;
    if (req.contains("prompt")) start.prompt = req.at("prompt").get<std::string>();
    if (req.contains("image")) start.image = decode_png(base64_decode(req.at("image").get<std::string>()));
    if (!req.contains("prompt") && !start.image) throw std::invalid_argument("either 'prompt' or 'image' is required");
    const PipelineConfig config = apply_config_json(options_.base_config, req.value("config", json::object()));

    auto session = std::make_shared<Session>();
    session->state = pipeline_.init_session(start, config);
    session->frames_png.push_back(encode_png(session->state.current_image));

    {
      std::lock_guard<std::mutex> lock(mutex_);
      do {
        session->id = new_session_id();
      } while (sessions_.count(session->id));
      sessions_[session->id] = session;
    }
    if (options_.data_dir) {
      session->store = SessionStore::create(*options_.data_dir / session->id, config, start, pipeline_.backends().name);
      write_file_bytes(session->store->frame_path(0), session->frames_png[0]);
    }
    return json_reply(200, {{"session_id", session->id},
                            {"frame_index", 0},
                            {"image", base64_encode(session->frames_png[0])},
                            {"config", to_json(config)}});
  });
}

HttpReply SessionService::step(const std::string& id, const std::string& body) {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  if (session->busy.exchange(true)) return error_reply(409, "a step is already in flight for this session");
  BusyGuard guard(session->busy);
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.is_object() || !req.contains("pose")) throw std::invalid_argument("'pose' is required");
    TrajectoryEntry entry = trajectory_entry_from_json(req.at("pose"));
    if (req.contains("prompt") && !req.at("prompt").is_null()) entry.prompt = req.at("prompt").get<std::string>();
    if (req.contains("config")) entry.overrides = step_overrides_from_json(req.at("config"));

    SessionState working;
    {
      std::lock_guard<std::mutex> lock(session->mutex);
      working = session->state;
    }
    const Frame frame = pipeline_.step(working, entry);
    auto png = encode_png(frame.image);

    json timing = json::object();
    for (const auto& [stage, ms] : frame.timing_ms) timing[stage] = ms;
    const json reply = {{"frame_index", frame.index},  {"image", base64_encode(png)},
                        {"hole_fraction", frame.hole_fraction}, {"timing_ms", timing},
                        {"prompt", frame.prompt},     {"embedding_id", frame.embedding_id}};

    std::lock_guard<std::mutex> lock(session->mutex);
    if (session->store) {
      write_file_bytes(session->store->frame_path(frame.index), png);
      session->store->write_log(working.log);
    }
    session->state = std::move(working);
    session->frames_png.push_back(std::move(png));
    return json_reply(200, reply);
  });
}

HttpReply SessionService::get_session(const std::string& id) const {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  std::lock_guard<std::mutex> lock(session->mutex);
  return json_reply(200, {{"session_id", id},
                          {"frame_index", session->state.frame_index},
                          {"prompt", session->state.prompt},
                          {"config", to_json(session->state.config)},
                          {"trajectory", log_to_json(session->state.log)}});
}

HttpReply SessionService::get_frame(const std::string& id, int index) const {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  std::lock_guard<std::mutex> lock(session->mutex);
  if (index < 0 || index >= static_cast<int>(session->frames_png.size())) {
    return error_reply(404, "frame " + std::to_string(index) + " does not exist");
  }
  const auto& png = session->frames_png[static_cast<std::size_t>(index)];
  return HttpReply{200, "image/png", std::string(png.begin(), png.end())};
}

HttpReply SessionService::delete_session(const std::string& id) {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  if (session->busy.exchange(true)) return error_reply(409, "a step is in flight for this session");
  std::lock_guard<std::mutex> lock(mutex_);
  sessions_.erase(id);
  return json_reply(200, {{"deleted", id}});
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  SessionService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionService& s) : service(s) {}
};

namespace {

void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body, reply.content_type);
}

}  // namespace

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  SessionService& svc = service;
  srv.Post("/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.create_session(req.body));
  });
  srv.Post(R"(/sessions/([^/]+)/step)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.step(req.matches[1], req.body));
  });
  srv.Get(R"(/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_session(req.matches[1]));
  });
  srv.Get(R"(/sessions/([^/]+)/frames/(\d+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    int index = -1;
    try {
      index = std::stoi(req.matches[2]);
    } catch (const std::exception&) {
    }
    send(res, svc.get_frame(req.matches[1], index));
  });
  srv.Delete(R"(/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.delete_session(req.matches[1]));
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind to " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw std::runtime_error("cannot bind to " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace latentwarp
