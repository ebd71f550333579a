#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latentwarp/pipeline.hpp"

namespace latentwarp {

/// zero-padded frame file name, e.g. frame_00007.png
std::string frame_file_name(int index);

/// On-disk record of one session:
///   config.json      immutable snapshot: pipeline config, start description, backend name
///   trajectory.json  committed log, itself a replayable trajectory document
///   frames/          frame_NNNNN.png
///   latents/         optional frame_NNNNN.f32 + .json dumps
class SessionStore {
 public:
  /// Creates the directory (which must not already hold a session).
  static SessionStore create(const std::filesystem::path& dir, const PipelineConfig& config,
                             const SessionStart& start, const std::string& backend_name);
  static SessionStore open(const std::filesystem::path& dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path frame_path(int index) const;

  void write_frame(int index, const Image& image) const;
  void write_latent(int index, const Grid& latent) const;
  void write_log(const std::vector<LogEntry>& log) const;

  const PipelineConfig& config() const { return config_; }
  const std::string& start_prompt() const { return start_prompt_; }
  bool starts_from_image() const { return start_from_image_; }
  const std::string& backend_name() const { return backend_name_; }

  std::vector<TrajectoryEntry> load_log() const;
  int stored_frame_count() const;

 private:
  SessionStore() = default;

  std::filesystem::path dir_;
  PipelineConfig config_;
  std::string start_prompt_;
  bool start_from_image_ = false;
  std::string backend_name_;
};

struct ReplayReport {
  int frames_compared = 0;
  std::vector<int> mismatched;  // frame indices whose PNG bytes differ
  std::optional<TrajectoryFailure> failure;

  bool identical() const { return mismatched.empty() && !failure; }
};

/// Re-runs the stored trajectory from the stored start and compares every
/// regenerated frame with the stored PNG bytes.
ReplayReport replay_session(const Pipeline& pipeline, const std::filesystem::path& dir);

}  // namespace latentwarp
