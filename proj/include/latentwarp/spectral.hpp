#pragma once

#include <complex>
#include <vector>

#include "latentwarp/geometry.hpp"
#include "latentwarp/grid.hpp"

namespace latentwarp {

/// Per-channel 2-D DFT of a grid. Bins are stored in natural (unshifted)
/// order; frequency_radius() gives each bin's distance from the centered DC.
struct Spectrum {
  Shape shape;
  std::vector<std::complex<double>> bins;

  std::complex<double>& operator()(int c, int ky, int kx) {
    return bins[(static_cast<std::size_t>(c) * shape.height + ky) * shape.width + kx];
  }
  std::complex<double> operator()(int c, int ky, int kx) const {
    return bins[(static_cast<std::size_t>(c) * shape.height + ky) * shape.width + kx];
  }
};

struct SpectralSplit {
  Grid low_spatial;
  Spectrum high_band;  // zero inside the low band
  double sigma = 0.0;
};

/// Signed, centered frequency index of natural-order bin k on an axis of n bins.
inline int centered_frequency(int k, int n) { return ((k + n / 2) % n) - n / 2; }

/// Euclidean distance of bin (ky, kx) from the DC bin, in bin units.
double frequency_radius(int ky, int kx, int height, int width);

/// Bins with frequency_radius <= sigma (height x width).
Mask low_band_mask(int height, int width, double sigma);

Spectrum fft2(const Grid& x);

/// Inverse transform; throws std::logic_error if the imaginary residue
/// exceeds 1e-6 (a non-Hermitian spectrum).
Grid ifft2_real(const Spectrum& spectrum);

SpectralSplit split_frequency(const Grid& x, double sigma);

/// Real part of IFFT(FFT(low_warped) + high_band).
Grid merge_frequency(const Grid& low_warped, const Spectrum& high_band);

/// Same, but the warped content is first restricted to the low band so that
/// the output spectrum outside `sigma` is exactly `high_band`.
Grid merge_frequency_band_limited(const Grid& low_warped, const Spectrum& high_band, double sigma);

struct LatentWarp {
  Grid latent;
  WarpResult warp;
};

/// Warps only the low-frequency content of a latent and re-attaches the
/// original high-frequency band. `depth` and `k` must already be at the
/// latent's resolution.
LatentWarp warp_latent_highpass(const Grid& latent, const DepthMap& depth,
                                const CameraIntrinsics& k, const CameraPose& pose, double sigma);

}  // namespace latentwarp
