#include "latentwarp/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace latentwarp {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

class Plan2d {
 public:
  Plan2d(int height, int width, int direction)
      : n_(static_cast<std::size_t>(height) * width),
        in_(fftw_alloc_complex(n_)),
        out_(fftw_alloc_complex(n_)) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_2d(height, width, in_.get(), out_.get(), direction, FFTW_ESTIMATE);
    if (plan_ == nullptr) throw std::runtime_error("fftw: plan creation failed");
  }
  ~Plan2d() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan2d(const Plan2d&) = delete;
  Plan2d& operator=(const Plan2d&) = delete;

  std::complex<double>* in() { return reinterpret_cast<std::complex<double>*>(in_.get()); }
  const std::complex<double>* out() const {
    return reinterpret_cast<const std::complex<double>*>(out_.get());
  }
  void execute() { fftw_execute(plan_); }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  FftwBuffer in_;
  FftwBuffer out_;
  fftw_plan plan_ = nullptr;
};

void require_dims(const Shape& s, const char* what) {
  if (s.height < 2 || s.width < 2) {
    throw std::invalid_argument(std::string(what) + ": spatial dims must be >= 2, got " + s.to_string());
  }
}

void apply_low_band(Spectrum& spectrum, const Mask& low, bool keep_low) {
  const std::size_t n = spectrum.shape.pixels();
  for (int c = 0; c < spectrum.shape.channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (low[i] != keep_low) spectrum.bins[c * n + i] = 0.0;
    }
  }
}

}  // namespace

double frequency_radius(int ky, int kx, int height, int width) {
  const double fy = centered_frequency(ky, height);
  const double fx = centered_frequency(kx, width);
  return std::sqrt(fy * fy + fx * fx);
}

Mask low_band_mask(int height, int width, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("low_band_mask: sigma must be >= 0");
  Mask m(height, width, false);
  for (int ky = 0; ky < height; ++ky) {
    for (int kx = 0; kx < width; ++kx) {
      m.set(ky, kx, frequency_radius(ky, kx, height, width) <= sigma);
    }
  }
  return m;
}

Spectrum fft2(const Grid& x) {
  require_dims(x.shape(), "fft2");
  Plan2d plan(x.height(), x.width(), FFTW_FORWARD);
  Spectrum s{x.shape(), std::vector<std::complex<double>>(x.size())};
  const std::size_t n = plan.size();
  for (int c = 0; c < x.channels(); ++c) {
    auto ch = x.channel(c);
    std::complex<double>* in = plan.in();
    for (std::size_t i = 0; i < n; ++i) in[i] = {ch[i], 0.0};
    plan.execute();
    std::copy(plan.out(), plan.out() + n, s.bins.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return s;
}

Grid ifft2_real(const Spectrum& spectrum) {
  require_dims(spectrum.shape, "ifft2_real");
  Plan2d plan(spectrum.shape.height, spectrum.shape.width, FFTW_BACKWARD);
  Grid out(spectrum.shape);
  const std::size_t n = plan.size();
  const double scale = 1.0 / static_cast<double>(n);
  double max_imag = 0.0;
  double max_real = 0.0;
  for (int c = 0; c < spectrum.shape.channels; ++c) {
    std::copy(spectrum.bins.begin() + static_cast<std::ptrdiff_t>(c * n),
              spectrum.bins.begin() + static_cast<std::ptrdiff_t>((c + 1) * n), plan.in());
    plan.execute();
    auto ch = out.channel(c);
    const std::complex<double>* res = plan.out();
    for (std::size_t i = 0; i < n; ++i) {
      ch[i] = res[i].real() * scale;
      max_real = std::max(max_real, std::abs(ch[i]));
      max_imag = std::max(max_imag, std::abs(res[i].imag() * scale));
    }
  }
  if (max_imag > 1e-6 * std::max(1.0, max_real)) {
    throw std::logic_error("ifft2_real: imaginary residue " + std::to_string(max_imag) +
                           " (spectrum is not Hermitian)");
  }
  return out;
}

SpectralSplit split_frequency(const Grid& x, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("split_frequency: sigma must be >= 0");
  require_dims(x.shape(), "split_frequency");
  const Mask low = low_band_mask(x.height(), x.width(), sigma);
  Spectrum full = fft2(x);
  Spectrum low_band = full;
  apply_low_band(low_band, low, /*keep_low=*/true);
  apply_low_band(full, low, /*keep_low=*/false);
  return SpectralSplit{ifft2_real(low_band), std::move(full), sigma};
}

Grid merge_frequency(const Grid& low_warped, const Spectrum& high_band) {
  if (low_warped.shape() != high_band.shape) {
    throw std::invalid_argument("merge_frequency: shape mismatch " + low_warped.shape().to_string() +
                                " vs " + high_band.shape.to_string());
  }
  Spectrum s = fft2(low_warped);
  for (std::size_t i = 0; i < s.bins.size(); ++i) s.bins[i] += high_band.bins[i];
  return ifft2_real(s);
}

Grid merge_frequency_band_limited(const Grid& low_warped, const Spectrum& high_band, double sigma) {
  if (low_warped.shape() != high_band.shape) {
    throw std::invalid_argument("merge_frequency_band_limited: shape mismatch");
  }
  Spectrum s = fft2(low_warped);
  apply_low_band(s, low_band_mask(s.shape.height, s.shape.width, sigma), /*keep_low=*/true);
  for (std::size_t i = 0; i < s.bins.size(); ++i) s.bins[i] += high_band.bins[i];
  return ifft2_real(s);
}

LatentWarp warp_latent_highpass(const Grid& latent, const DepthMap& depth,
                                const CameraIntrinsics& k, const CameraPose& pose, double sigma) {
  SpectralSplit split = split_frequency(latent, sigma);
  ForwardWarp warped = forward_warp(split.low_spatial, depth, k, pose);
  Grid merged = merge_frequency_band_limited(warped.grid, split.high_band, sigma);
  return LatentWarp{std::move(merged), std::move(warped.warp)};
}

}  // namespace latentwarp
