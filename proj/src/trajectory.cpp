#include "latentwarp/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "latentwarp/serialization.hpp"

namespace latentwarp {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("trajectory entry: " + what);
}

bool finite(const auto& values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Eigen::Matrix3d rotation_matrix(const std::array<double, 9>& r) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = r[static_cast<std::size_t>(i * 3 + j)];
  return m;
}

}  // namespace

void TrajectoryEntry::validate() const {
  require(rotation.has_value() != euler.has_value(), "exactly one of 'rotation' or 'euler' is required");
  require(finite(translation), "translation must be finite");
  if (euler) require(finite(*euler), "euler angles must be finite");
  if (rotation) {
    require(finite(*rotation), "rotation must be finite");
    CameraPose probe;
    probe.rotation = rotation_matrix(*rotation);
    try {
      probe.validate();
    } catch (const std::invalid_argument&) {
      require(false, "rotation is not a proper orthonormal matrix");
    }
  }
  if (overrides.sigma) require(*overrides.sigma >= 0.0, "sigma must be >= 0");
  if (overrides.lambda) require(*overrides.lambda >= 0.0 && std::isfinite(*overrides.lambda), "lambda must be >= 0");
  if (overrides.guidance_scale) {
    require(*overrides.guidance_scale >= 0.0 && std::isfinite(*overrides.guidance_scale),
            "guidance_scale must be >= 0");
  }
}

CameraPose TrajectoryEntry::to_pose() const {
  validate();
  const Eigen::Matrix3d r =
      rotation ? rotation_matrix(*rotation) : rotation_from_euler((*euler)[0], (*euler)[1], (*euler)[2]);
  const Eigen::Vector3d t(translation[0], translation[1], translation[2]);
  return CameraPose::from_camera_motion(r, t);
}

TrajectoryEntry forward_entry(double distance) {
  TrajectoryEntry e;
  e.euler = std::array<double, 3>{0.0, 0.0, 0.0};
  e.translation = {0.0, 0.0, distance};
  return e;
}

std::vector<TrajectoryEntry> parse_trajectory(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("trajectory: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw std::invalid_argument("trajectory: document must be a JSON array");
  std::vector<TrajectoryEntry> entries;
  entries.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      entries.push_back(trajectory_entry_from_json(doc[i]));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("trajectory[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return entries;
}

std::vector<TrajectoryEntry> load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("trajectory: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory(ss.str());
}

std::string trajectory_to_text(const std::vector<TrajectoryEntry>& entries) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries) doc.push_back(to_json(e));
  return doc.dump(2) + "\n";
}

}  // namespace latentwarp
