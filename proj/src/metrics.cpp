#include "latentwarp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace latentwarp {

namespace {

void check_unit_range(const Image& img, const char* what) {
  for (double v : img.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(std::string(what) + ": values must lie in [0, 1]");
    }
  }
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty images");
  check_unit_range(a, "psnr");
  check_unit_range(b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Grid luminance(const Image& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) {
    throw std::invalid_argument("luminance: expected 1 or 3 channels, got " + image.shape().to_string());
  }
  Grid y(1, image.height(), image.width());
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      y(0, r, c) = 0.299 * image(0, r, c) + 0.587 * image(1, r, c) + 0.114 * image(2, r, c);
  return y;
}

double ssim(const Image& a, const Image& b, const SsimOptions& o) {
  require_same_shape(a, b, "ssim");
  if (o.window < 1 || o.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
  if (a.height() < o.window || a.width() < o.window) {
    throw std::invalid_argument("ssim: images smaller than the " + std::to_string(o.window) + "px window");
  }
  const Grid la = luminance(a), lb = luminance(b);
  const int h = la.height(), w = la.width();
  const auto& x = la.data();
  const auto& y = lb.data();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_kernel(o.window, o.gaussian_sigma);
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto exx = filter_valid(xx, h, w, k), eyy = filter_valid(yy, h, w, k), exy = filter_valid(xy, h, w, k);
  const double c1 = (o.k1 * o.data_range) * (o.k1 * o.data_range);
  const double c2 = (o.k2 * o.data_range) * (o.k2 * o.data_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cov = exy[i] - mx[i] * my[i];
    sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

SequenceReport sequence_consistency(const std::vector<Image>& frames) {
  if (frames.size() < 2) throw std::invalid_argument("sequence_consistency: need at least 2 frames");
  SequenceReport r;
  r.frame_count = static_cast<int>(frames.size());
  for (std::size_t i = 1; i < frames.size(); ++i) {
    r.psnr.push_back(psnr(frames[i - 1], frames[i]));
    r.ssim.push_back(ssim(frames[i - 1], frames[i]));
  }
  for (std::size_t i = 0; i < r.psnr.size(); ++i) {
    r.mean_psnr += r.psnr[i];
    r.mean_ssim += r.ssim[i];
  }
  r.mean_psnr /= static_cast<double>(r.psnr.size());
  r.mean_ssim /= static_cast<double>(r.ssim.size());
  return r;
}

std::string SequenceReport::to_text() const {
  std::string out = "pair      psnr_db     ssim\n";
  char line[96];
  for (std::size_t i = 0; i < psnr.size(); ++i) {
    std::snprintf(line, sizeof(line), "%4zu-%-4zu %8.3f %8.5f\n", i, i + 1, psnr[i], ssim[i]);
    out += line;
  }
  std::snprintf(line, sizeof(line), "mean      %8.3f %8.5f  (%d frames)\n", mean_psnr, mean_ssim, frame_count);
  out += line;
  return out;
}

}  // namespace latentwarp
