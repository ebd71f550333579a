#include "latentwarp/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace latentwarp {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

}  // namespace

void CameraIntrinsics::validate() const {
  require(width >= 2 && height >= 2, "CameraIntrinsics: width and height must be >= 2");
  require(fx > 0.0 && fy > 0.0, "CameraIntrinsics: focal lengths must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
          "CameraIntrinsics: principal point outside the grid");
}

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double horizontal_fov_deg) {
  require(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0,
          "CameraIntrinsics::from_fov: field of view must be in (0, 180)");
  const double f = 0.5 * width / std::tan(0.5 * horizontal_fov_deg * kPi / 180.0);
  CameraIntrinsics k{f, f, 0.5 * width, 0.5 * height, width, height};
  k.validate();
  return k;
}

void CameraPose::validate() const {
  require(rotation.allFinite() && translation.allFinite(), "CameraPose: non-finite entries");
  const double ortho_err =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  require(ortho_err < 1e-6, "CameraPose: rotation is not orthonormal");
  require(rotation.determinant() > 0.0, "CameraPose: rotation has negative determinant");
}

bool CameraPose::is_identity() const {
  return rotation == Eigen::Matrix3d::Identity() && translation == Eigen::Vector3d::Zero();
}

CameraPose CameraPose::from_camera_motion(const Eigen::Matrix3d& camera_rotation,
                                          const Eigen::Vector3d& camera_translation) {
  CameraPose pose;
  pose.rotation = camera_rotation.transpose();
  pose.translation = -(pose.rotation * camera_translation);
  // Keep exact zeros so a motionless entry maps to the exact identity pose.
  for (int i = 0; i < 3; ++i) {
    if (pose.translation[i] == 0.0) pose.translation[i] = 0.0;
  }
  return pose;
}

Eigen::Matrix3d rotation_from_euler(double yaw_deg, double pitch_deg, double roll_deg) {
  const double toRad = kPi / 180.0;
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(yaw_deg * toRad, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(pitch_deg * toRad, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(roll_deg * toRad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return ry * rx * rz;
}

void DepthMap::validate() const {
  require(width > 0 && height > 0, "DepthMap: empty");
  require(values.size() == static_cast<std::size_t>(width) * height, "DepthMap: size mismatch");
  for (double d : values) {
    require(std::isfinite(d) && d > 0.0, "DepthMap: values must be finite and positive");
  }
}

double WarpResult::hole_fraction() const {
  if (hole_mask.size() == 0) return 0.0;
  return static_cast<double>(hole_mask.count()) / static_cast<double>(hole_mask.size());
}

WarpResult WarpResult::identity(int width, int height) {
  WarpResult w;
  w.width = width;
  w.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  w.source_u.resize(n);
  w.source_v.resize(n);
  w.target_depth.assign(n, 1.0);
  w.hole_mask = Mask(height, width, false);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      w.source_u[i] = x;
      w.source_v[i] = y;
    }
  }
  return w;
}

CameraIntrinsics rescale_intrinsics(const CameraIntrinsics& k, int new_width, int new_height) {
  require(new_width >= 2 && new_height >= 2, "rescale_intrinsics: target size must be >= 2");
  if (new_width == k.width && new_height == k.height) return k;
  const double sx = static_cast<double>(new_width) / k.width;
  const double sy = static_cast<double>(new_height) / k.height;
  return CameraIntrinsics{k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, new_width, new_height};
}

Reprojection reproject(const DepthMap& depth, const CameraIntrinsics& k, const CameraPose& pose) {
  require(depth.width == k.width && depth.height == k.height,
          "reproject: depth and intrinsics dimensions differ");
  const std::size_t n = static_cast<std::size_t>(depth.width) * depth.height;
  Reprojection out{depth.width, depth.height, std::vector<double>(n), std::vector<double>(n),
                   std::vector<double>(n), std::vector<std::uint8_t>(n, 1)};

  if (pose.is_identity()) {
    for (int v = 0; v < depth.height; ++v) {
      for (int u = 0; u < depth.width; ++u) {
        const std::size_t i = static_cast<std::size_t>(v) * depth.width + u;
        out.u[i] = u;
        out.v[i] = v;
        out.depth[i] = depth.values[i];
        out.valid[i] = depth.values[i] > kMinProjectedDepth;
      }
    }
    return out;
  }

  const Eigen::Matrix3d& r = pose.rotation;
  const Eigen::Vector3d& t = pose.translation;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * depth.width + u;
      const double d = depth.values[i];
      const double x = (u - k.cx) / k.fx * d;
      const double y = (v - k.cy) / k.fy * d;
      const double z = d;
      const double xp = r(0, 0) * x + r(0, 1) * y + r(0, 2) * z + t[0];
      const double yp = r(1, 0) * x + r(1, 1) * y + r(1, 2) * z + t[1];
      const double zp = r(2, 0) * x + r(2, 1) * y + r(2, 2) * z + t[2];
      out.depth[i] = zp;
      if (!(zp > kMinProjectedDepth)) {
        out.valid[i] = 0;
        out.u[i] = std::numeric_limits<double>::quiet_NaN();
        out.v[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      out.u[i] = k.fx * xp / zp + k.cx;
      out.v[i] = k.fy * yp / zp + k.cy;
    }
  }
  return out;
}

namespace detail {

ForwardWarp scatter_in_order(const Grid& grid, const Reprojection& proj,
                             std::span<const std::size_t> visit_order) {
  const int w = proj.width;
  const int h = proj.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<double> best_depth(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> best_source(n, kNone);

  for (std::size_t s : visit_order) {
    if (!proj.valid[s]) continue;
    const double tu = round_to_pixel(proj.u[s]);
    const double tv = round_to_pixel(proj.v[s]);
    if (!(tu >= 0.0 && tu < w && tv >= 0.0 && tv < h)) continue;
    const std::size_t ti = static_cast<std::size_t>(tv) * w + static_cast<std::size_t>(tu);
    const double d = proj.depth[s];
    if (d < best_depth[ti] || (d == best_depth[ti] && s < best_source[ti])) {
      best_depth[ti] = d;
      best_source[ti] = s;
    }
  }

  ForwardWarp out;
  out.grid = Grid(grid.channels(), h, w);
  WarpResult& warp = out.warp;
  warp.width = w;
  warp.height = h;
  warp.source_u.assign(n, 0.0);
  warp.source_v.assign(n, 0.0);
  warp.target_depth.assign(n, std::numeric_limits<double>::quiet_NaN());
  warp.hole_mask = Mask(h, w, true);

  for (std::size_t ti = 0; ti < n; ++ti) {
    const std::size_t s = best_source[ti];
    if (s == kNone) continue;
    warp.hole_mask.set(ti, false);
    warp.source_u[ti] = static_cast<double>(s % w);
    warp.source_v[ti] = static_cast<double>(s / w);
    warp.target_depth[ti] = best_depth[ti];
    for (int c = 0; c < grid.channels(); ++c) {
      out.grid.channel(c)[ti] = grid.channel(c)[s];
    }
  }
  out.grid = fill_holes(out.grid, warp.hole_mask);
  return out;
}

}  // namespace detail

ForwardWarp forward_warp(const Grid& grid, const DepthMap& depth, const CameraIntrinsics& k,
                         const CameraPose& pose) {
  require(grid.height() == depth.height && grid.width() == depth.width,
          "forward_warp: grid " + grid.shape().to_string() + " does not match depth " +
              std::to_string(depth.height) + "x" + std::to_string(depth.width));
  require(k.width == depth.width && k.height == depth.height,
          "forward_warp: intrinsics do not match grid resolution");
  const Reprojection proj = reproject(depth, k, pose);
  std::vector<std::size_t> order(static_cast<std::size_t>(depth.width) * depth.height);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return detail::scatter_in_order(grid, proj, order);
}

WarpResult resample_warp(const WarpResult& warp, int width, int height) {
  if (width == warp.width && height == warp.height) return warp;
  require(width > 0 && height > 0, "resample_warp: empty target");

  const bool up = width >= warp.width && height >= warp.height;
  const bool down = width <= warp.width && height <= warp.height;
  require(up || down, "resample_warp: mixed up/down scaling between axes");
  const int big_w = up ? width : warp.width;
  const int big_h = up ? height : warp.height;
  const int small_w = up ? warp.width : width;
  const int small_h = up ? warp.height : height;
  require(big_w % small_w == 0 && big_h % small_h == 0,
          "resample_warp: resolution ratio is not an integer (" + std::to_string(warp.width) + "x" +
              std::to_string(warp.height) + " -> " + std::to_string(width) + "x" +
              std::to_string(height) + ")");
  const int fx = big_w / small_w;
  const int fy = big_h / small_h;

  WarpResult out;
  out.width = width;
  out.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  out.source_u.assign(n, 0.0);
  out.source_v.assign(n, 0.0);
  out.target_depth.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.hole_mask = Mask(height, width, true);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int wx, wy;
      if (up) {
        wx = std::min(static_cast<int>(std::floor(static_cast<double>(x) / fx + 0.5)), warp.width - 1);
        wy = std::min(static_cast<int>(std::floor(static_cast<double>(y) / fy + 0.5)), warp.height - 1);
      } else {
        wx = x * fx;
        wy = y * fy;
      }
      const std::size_t wi = static_cast<std::size_t>(wy) * warp.width + wx;
      if (!warp.has_source(wi)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double su, sv;
      if (up) {
        // Keep the sub-block offset so an identity field stays an identity.
        su = warp.source_u[wi] * fx + (x - wx * fx);
        sv = warp.source_v[wi] * fy + (y - wy * fy);
      } else {
        su = warp.source_u[wi] / fx;
        sv = warp.source_v[wi] / fy;
      }
      out.source_u[i] = std::clamp(su, 0.0, static_cast<double>(width - 1));
      out.source_v[i] = std::clamp(sv, 0.0, static_cast<double>(height - 1));
      out.target_depth[i] = warp.target_depth[wi];
      out.hole_mask.set(i, false);
    }
  }
  return out;
}

Grid warp_with_result(const Grid& grid, const WarpResult& warp_in) {
  const WarpResult warp = resample_warp(warp_in, grid.width(), grid.height());
  const int w = grid.width();
  const int h = grid.height();
  Grid out(grid.channels(), h, w);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!warp.has_source(i)) continue;
      const double su = warp.source_u[i];
      const double sv = warp.source_v[i];
      const int x0 = static_cast<int>(std::floor(su));
      const int y0 = static_cast<int>(std::floor(sv));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double ax = su - x0;
      const double ay = sv - y0;
      for (int c = 0; c < grid.channels(); ++c) {
        double v = grid(c, y0, x0);
        if (ax != 0.0 || ay != 0.0) {
          v = (1.0 - ay) * ((1.0 - ax) * grid(c, y0, x0) + ax * grid(c, y0, x1)) +
              ay * ((1.0 - ax) * grid(c, y1, x0) + ax * grid(c, y1, x1));
        }
        out(c, y, x) = v;
      }
    }
  }
  return fill_holes(out, warp.hole_mask);
}

Grid fill_holes(const Grid& grid, const Mask& hole_mask) {
  require(hole_mask.height() == grid.height() && hole_mask.width() == grid.width(),
          "fill_holes: mask does not match grid");
  const std::size_t holes = hole_mask.count();
  if (holes == 0) return grid;
  Grid out = grid;
  const std::size_t n = grid.shape().pixels();
  const std::size_t valid = n - holes;
  for (int c = 0; c < grid.channels(); ++c) {
    auto ch = out.channel(c);
    double fill = 0.0;
    if (valid > 0) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!hole_mask[i]) sum += ch[i];
      }
      fill = sum / static_cast<double>(valid);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (hole_mask[i]) ch[i] = fill;
    }
  }
  return out;
}

DepthMap downsample_depth(const DepthMap& depth, int new_height, int new_width) {
  require(new_height > 0 && new_width > 0, "downsample_depth: empty target");
  require(new_height <= depth.height && new_width <= depth.width,
          "downsample_depth: upsampling requested");
  if (new_height == depth.height && new_width == depth.width) return depth;

  DepthMap out(new_width, new_height, 0.0, depth.source);
  for (int i = 0; i < new_height; ++i) {
    const int y0 = static_cast<int>(static_cast<long long>(i) * depth.height / new_height);
    const int y1 = static_cast<int>(static_cast<long long>(i + 1) * depth.height / new_height);
    for (int j = 0; j < new_width; ++j) {
      const int x0 = static_cast<int>(static_cast<long long>(j) * depth.width / new_width);
      const int x1 = static_cast<int>(static_cast<long long>(j + 1) * depth.width / new_width);
      double sum = 0.0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) sum += depth(y, x);
      }
      out(i, j) = sum / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

}  // namespace latentwarp
