#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latentwarp/backends.hpp"
#include "latentwarp/geometry.hpp"
#include "latentwarp/grid.hpp"
#include "latentwarp/scheduler.hpp"
#include "latentwarp/trajectory.hpp"

namespace latentwarp {

struct PipelineConfig {
  int total_steps = 1000;
  int t1 = 21;
  int t2 = 441;
  double sigma = 20.0;  // +inf disables the high-pass split
  double lambda = 300.0;
  int ddim_steps = 50;
  ScheduleKind schedule = ScheduleKind::scaled_linear;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;

  double guidance_scale = 7.5;            // next-view and text-to-image sampling
  double inversion_guidance_scale = 1.0;  // inversion and the current-view branch
  std::string negative_prompt;

  std::string feature_tap;                                 // empty: backend default
  std::optional<std::vector<std::string>> injection_sites;  // unset: every attention site
  int injection_t_min = 0;                                 // inject while t lies in [min, max]
  int injection_t_max = std::numeric_limits<int>::max();

  /// true: noise x'_{t1} to t2 with the forward process. false: carry it up
  /// deterministically by DDIM inversion (used for reconstruction checks).
  bool stochastic_lift = true;
  int inversion_refinement = 5;

  std::uint64_t seed = 0;
  Shape latent_shape{4, 64, 64};
  double horizontal_fov_deg = 60.0;
  int fd_directions = 16;

  /// Throws std::invalid_argument when the configuration is inconsistent.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

PipelineConfig apply_overrides(PipelineConfig config, const StepOverrides& overrides);

/// One committed step of a session.
struct LogEntry {
  int frame_index = 0;  // index of the frame this step produced
  TrajectoryEntry entry;
  CameraPose pose;
  std::string prompt;
  std::uint64_t embedding_id = 0;
  double hole_fraction = 0.0;
};

struct SessionState {
  PipelineConfig config;
  int frame_index = 0;
  Image current_image;
  DepthMap current_depth;
  std::string prompt;
  TextEmbedding text;
  std::vector<LogEntry> log;
};

struct Frame {
  int index = 0;
  Image image;
  CameraPose pose;
  std::string prompt;
  std::uint64_t embedding_id = 0;
  std::vector<std::pair<std::string, double>> timing_ms;
  double hole_fraction = 0.0;
  Grid latent;  // clean next-view latent before decoding
};

struct SessionStart {
  std::string prompt;
  std::optional<Image> image;  // when set, used as frame 0; otherwise generated from prompt
};

struct TrajectoryFailure {
  int entry_index = 0;
  std::string stage;
  std::string message;
};

struct TrajectoryRun {
  std::vector<Frame> frames;
  std::optional<TrajectoryFailure> failure;
};

class Pipeline {
 public:
  explicit Pipeline(BackendSuite backends);

  const BackendSuite& backends() const { return backends_; }

  SessionState init_session(const SessionStart& start, const PipelineConfig& config) const;

  /// One flight step. On any failure the session is left untouched; stage
  /// failures are reported as StageError.
  Frame step(SessionState& session, const TrajectoryEntry& entry) const;
  Frame step(SessionState& session, const CameraPose& pose,
             const std::optional<std::string>& new_prompt = std::nullopt,
             const StepOverrides& overrides = {}) const;

  TrajectoryRun run_trajectory(SessionState& session,
                               const std::vector<TrajectoryEntry>& trajectory) const;

 private:
  Frame step_with_pose(SessionState& session, const TrajectoryEntry& entry,
                       const CameraPose& pose) const;

  BackendSuite backends_;
};

/// Entry reproducing `pose` through TrajectoryEntry::to_pose (up to rounding).
TrajectoryEntry entry_from_pose(const CameraPose& pose);

}  // namespace latentwarp
