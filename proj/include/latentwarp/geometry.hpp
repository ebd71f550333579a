#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "latentwarp/grid.hpp"

namespace latentwarp {

// Camera convention: right-handed, x right, y down, the camera looks down +z.
// Pixel (u, v) has its center at integer coordinates, u along width.

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 2;
  int height = 2;

  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;

  /// Intrinsics with principal point at the grid center and the given
  /// horizontal field of view; square pixels.
  static CameraIntrinsics from_fov(int width, int height, double horizontal_fov_deg);
};

/// Rigid transform taking points in the current camera frame to the next
/// camera frame: X' = R X + T.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;
  bool is_identity() const;

  static CameraPose identity() { return {}; }

  /// Pose induced by moving the camera: it rotates by `camera_rotation`
  /// (the new orientation in the old frame) and its center moves by
  /// `camera_translation` expressed in the old frame.
  static CameraPose from_camera_motion(const Eigen::Matrix3d& camera_rotation,
                                       const Eigen::Vector3d& camera_translation);
};

/// Rotation from yaw (about +y), pitch (about +x), roll (about +z) in
/// degrees, composed as Ry * Rx * Rz.
Eigen::Matrix3d rotation_from_euler(double yaw_deg, double pitch_deg, double roll_deg);

enum class DepthSource { estimated, procedural };

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major
  DepthSource source = DepthSource::estimated;

  DepthMap() = default;
  DepthMap(int width, int height, double fill, DepthSource source = DepthSource::estimated)
      : width(width), height(height),
        values(static_cast<std::size_t>(width) * height, fill), source(source) {}

  double operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;
  bool operator==(const DepthMap&) const = default;
};

/// Per-source-pixel reprojection into the next view.
struct Reprojection {
  int width = 0;
  int height = 0;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;  // false where the point lands behind the camera
};

/// Dense backward mapping produced by a forward warp: for each target
/// pixel, where its content came from in the source frame.
struct WarpResult {
  int width = 0;
  int height = 0;
  std::vector<double> source_u;  // meaningful only where !hole_mask
  std::vector<double> source_v;
  Mask hole_mask;
  std::vector<double> target_depth;  // NaN at holes

  bool has_source(std::size_t i) const { return !hole_mask[i]; }
  double hole_fraction() const;

  static WarpResult identity(int width, int height);
};

inline constexpr double kMinProjectedDepth = 1e-6;

CameraIntrinsics rescale_intrinsics(const CameraIntrinsics& k, int new_width, int new_height);

Reprojection reproject(const DepthMap& depth, const CameraIntrinsics& k, const CameraPose& pose);

struct ForwardWarp {
  Grid grid;
  WarpResult warp;
};

/// Z-buffered scatter of every source pixel to its rounded target pixel.
/// Nearest target depth wins; equal depths go to the smaller row-major
/// source index. Holes are filled with fill_holes.
ForwardWarp forward_warp(const Grid& grid, const DepthMap& depth, const CameraIntrinsics& k,
                         const CameraPose& pose);

/// Gathers `grid` through a precomputed mapping with bilinear sampling.
/// The mapping is resampled (nearest neighbor) when the grid resolution is
/// an integer multiple or divisor of the warp resolution.
Grid warp_with_result(const Grid& grid, const WarpResult& warp);

/// The warp field expressed at another resolution related by an integer factor.
WarpResult resample_warp(const WarpResult& warp, int width, int height);

Grid fill_holes(const Grid& grid, const Mask& hole_mask);

DepthMap downsample_depth(const DepthMap& depth, int new_height, int new_width);

namespace detail {

/// forward_warp's scatter with an explicit source visit order; the result
/// must not depend on the order.
ForwardWarp scatter_in_order(const Grid& grid, const Reprojection& proj,
                             std::span<const std::size_t> visit_order);

inline double round_to_pixel(double coord) { return std::floor(coord + 0.5); }

}  // namespace detail

}  // namespace latentwarp
