#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentwarp/geometry.hpp"

namespace latentwarp {

/// Per-step parameter changes carried with a trajectory entry.
struct StepOverrides {
  std::optional<double> sigma;
  std::optional<double> lambda;
  std::optional<double> guidance_scale;
  std::optional<int> t1;
  std::optional<int> t2;

  bool empty() const { return !sigma && !lambda && !guidance_scale && !t1 && !t2; }
  bool operator==(const StepOverrides&) const = default;
};

/// One flight step. Rotation and translation describe the camera's own
/// motion in its current frame (translation +z flies forward); exactly one
/// of `rotation` (row-major) or `euler` (yaw, pitch, roll in degrees) is set.
struct TrajectoryEntry {
  std::optional<std::array<double, 9>> rotation;
  std::optional<std::array<double, 3>> euler;
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  std::optional<std::string> prompt;
  StepOverrides overrides;

  /// Throws std::invalid_argument on a malformed entry.
  void validate() const;
  /// The point transform from the current camera to the next one.
  CameraPose to_pose() const;

  bool operator==(const TrajectoryEntry&) const = default;
};

TrajectoryEntry forward_entry(double distance);

/// Parses a trajectory document (a JSON array of entries). Malformed input
/// throws std::invalid_argument with the offending entry index.
std::vector<TrajectoryEntry> parse_trajectory(std::string_view json_text);
std::vector<TrajectoryEntry> load_trajectory(const std::filesystem::path& path);
std::string trajectory_to_text(const std::vector<TrajectoryEntry>& entries);

}  // namespace latentwarp
