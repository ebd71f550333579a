#pragma once

// Independent reference implementations used as test oracles. They favour
// the most literal formulation over speed and share no code with the library.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "latentwarp/geometry.hpp"
#include "latentwarp/grid.hpp"

namespace oracle {

using latentwarp::Grid;

struct Scatter {
  Grid grid;
  std::vector<bool> hole;
};

/// For every target pixel, scans all source pixels and keeps the nearest
/// one landing on it (ties: smaller row-major source index). Holes get the
/// per-channel mean of the non-hole output pixels, or zero.
inline Scatter brute_force_warp(const Grid& src, const latentwarp::DepthMap& depth,
                                const latentwarp::CameraIntrinsics& k, const latentwarp::CameraPose& pose) {
  const int w = src.width(), h = src.height();
  struct Hit {
    bool ok;
    long tx, ty;
    double z;
  };
  std::vector<Hit> hits;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = depth(v, u);
      const double p[3] = {(u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d};
      double q[3];
      for (int r = 0; r < 3; ++r) {
        q[r] = pose.rotation(r, 0) * p[0] + pose.rotation(r, 1) * p[1] + pose.rotation(r, 2) * p[2] + pose.translation[r];
      }
      if (!(q[2] > 1e-6)) {
        hits.push_back({false, 0, 0, 0.0});
        continue;
      }
      const double tu = k.fx * q[0] / q[2] + k.cx;
      const double tv = k.fy * q[1] / q[2] + k.cy;
      hits.push_back({true, static_cast<long>(std::floor(tu + 0.5)), static_cast<long>(std::floor(tv + 0.5)), q[2]});
    }
  }
  Scatter out{Grid(src.channels(), h, w), std::vector<bool>(static_cast<std::size_t>(w) * h, true)};
  for (int ty = 0; ty < h; ++ty) {
    for (int tx = 0; tx < w; ++tx) {
      long best = -1;
      double best_z = std::numeric_limits<double>::infinity();
      for (long s = 0; s < static_cast<long>(hits.size()); ++s) {
        const Hit& hit = hits[static_cast<std::size_t>(s)];
        if (!hit.ok || hit.tx != tx || hit.ty != ty) continue;
        if (hit.z < best_z) {  // strict: the earlier (smaller) index keeps ties
          best_z = hit.z;
          best = s;
        }
      }
      if (best < 0) continue;
      out.hole[static_cast<std::size_t>(ty) * w + tx] = false;
      for (int c = 0; c < src.channels(); ++c) out.grid(c, ty, tx) = src(c, static_cast<int>(best / w), static_cast<int>(best % w));
    }
  }
  for (int c = 0; c < src.channels(); ++c) {
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < w * h; ++i) {
      if (!out.hole[static_cast<std::size_t>(i)]) {
        sum += out.grid(c, i / w, i % w);
        ++n;
      }
    }
    const double mean = n > 0 ? sum / n : 0.0;
    for (int i = 0; i < w * h; ++i) {
      if (out.hole[static_cast<std::size_t>(i)]) out.grid(c, i / w, i % w) = mean;
    }
  }
  return out;
}

inline double psnr(const Grid& a, const Grid& b) {
  long double se = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a.data()[i]) - b.data()[i];
    se += d * d;
  }
  const long double mse = se / a.size();
  if (mse == 0.0L) return 100.0;
  return static_cast<double>(-10.0L * std::log10(mse));
}

/// Literal SSIM: a full 2-D Gaussian window evaluated at every valid
/// position with explicit weighted sums.
inline double ssim(const Grid& a, const Grid& b) {
  auto luma = [](const Grid& g, int y, int x) {
    return g.channels() == 1 ? g(0, y, x) : 0.299 * g(0, y, x) + 0.587 * g(1, y, x) + 0.114 * g(2, y, x);
  };
  const int n = 11;
  const double sigma = 1.5;
  double w2[11][11];
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double di = i - 5, dj = j - 5;
      w2[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += w2[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + n <= a.height(); ++y) {
    for (int x = 0; x + n <= a.width(); ++x) {
      double mx = 0, my = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          mx += w2[i][j] / total * luma(a, y + i, x + j);
          my += w2[i][j] / total * luma(b, y + i, x + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double da = luma(a, y + i, x + j) - mx, db = luma(b, y + i, x + j) - my;
          vx += w2[i][j] / total * da * da;
          vy += w2[i][j] / total * db * db;
          cov += w2[i][j] / total * da * db;
        }
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return acc / count;
}

/// Central differences with step 1e-3 * (1 + |x_i|) per coordinate.
inline Grid central_difference(const std::function<double(const Grid&)>& f, const Grid& x) {
  Grid g(x.shape());
  Grid probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-3 * (1.0 + std::abs(x.data()[i]));
    probe.data()[i] = x.data()[i] + h;
    const double up = f(probe);
    probe.data()[i] = x.data()[i] - h;
    const double down = f(probe);
    probe.data()[i] = x.data()[i];
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const Grid& a, const Grid& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    den += b.data()[i] * b.data()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

}  // namespace oracle
