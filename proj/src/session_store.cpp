#include "latentwarp/session_store.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "latentwarp/image_io.hpp"
#include "latentwarp/serialization.hpp"

namespace latentwarp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

json read_json(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string frame_file_name(int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05d.png", index);
  return name;
}

SessionStore SessionStore::create(const fs::path& dir, const PipelineConfig& config,
                                  const SessionStart& start, const std::string& backend_name) {
  if (fs::exists(dir / "config.json")) {
    throw std::invalid_argument("'" + dir.string() + "' already contains a session");
  }
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "latents");
  SessionStore store;
  store.dir_ = dir;
  store.config_ = config;
  store.start_prompt_ = start.prompt;
  store.start_from_image_ = start.image.has_value();
  store.backend_name_ = backend_name;
  const json snapshot = {
      {"config", to_json(config)},
      {"start", {{"kind", store.start_from_image_ ? "image" : "prompt"}, {"prompt", start.prompt}}},
      {"backend", backend_name},
  };
  write_text(dir / "config.json", snapshot.dump(2) + "\n");
  store.write_log({});
  return store;
}

SessionStore SessionStore::open(const fs::path& dir) {
  const json snapshot = read_json(dir / "config.json");
  SessionStore store;
  store.dir_ = dir;
  try {
    store.config_ = apply_config_json(PipelineConfig{}, snapshot.at("config"));
    const json& start = snapshot.at("start");
    store.start_prompt_ = start.at("prompt").get<std::string>();
    store.start_from_image_ = start.at("kind").get<std::string>() == "image";
    store.backend_name_ = snapshot.value("backend", "");
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed session config in '" + dir.string() + "': " + e.what());
  }
  return store;
}

fs::path SessionStore::frame_path(int index) const { return dir_ / "frames" / frame_file_name(index); }

void SessionStore::write_frame(int index, const Image& image) const { write_png(frame_path(index), image); }

void SessionStore::write_latent(int index, const Grid& latent) const {
  fs::path stem = dir_ / "latents" / frame_file_name(index);
  stem.replace_extension();
  write_latent_dump(stem, latent);
}

void SessionStore::write_log(const std::vector<LogEntry>& log) const {
  // Write-then-rename keeps the log readable if the process dies mid-write.
  const fs::path tmp = dir_ / "trajectory.json.tmp";
  write_text(tmp, log_to_json(log).dump(2) + "\n");
  fs::rename(tmp, dir_ / "trajectory.json");
}

std::vector<TrajectoryEntry> SessionStore::load_log() const {
  return load_trajectory(dir_ / "trajectory.json");
}

int SessionStore::stored_frame_count() const {
  int n = 0;
  while (fs::exists(frame_path(n))) ++n;
  return n;
}

ReplayReport replay_session(const Pipeline& pipeline, const fs::path& dir) {
  const SessionStore store = SessionStore::open(dir);
  const std::vector<TrajectoryEntry> entries = store.load_log();

  SessionStart start;
  start.prompt = store.start_prompt();
  if (store.starts_from_image()) start.image = read_png(store.frame_path(0));
  SessionState session = pipeline.init_session(start, store.config());

  ReplayReport report;
  auto compare = [&](int index, const Image& image) {
    ++report.frames_compared;
    const fs::path path = store.frame_path(index);
    if (!fs::exists(path) || read_file_bytes(path) != encode_png(image)) report.mismatched.push_back(index);
  };
  compare(0, session.current_image);
  if (entries.empty()) return report;
  const TrajectoryRun run = pipeline.run_trajectory(session, entries);
  for (const Frame& f : run.frames) compare(f.index, f.image);
  report.failure = run.failure;
  return report;
}

}  // namespace latentwarp
