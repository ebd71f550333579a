#pragma once

#include <string>
#include <vector>

#include "latentwarp/grid.hpp"

namespace latentwarp {

inline constexpr double kPsnrCap = 100.0;

/// Peak-1 PSNR in dB for images with values in [0, 1]; identical inputs give kPsnrCap.
double psnr(const Image& a, const Image& b);

/// ITU-R 601 luma of an RGB image; single-channel grids pass through.
Grid luminance(const Image& image);

struct SsimOptions {
  int window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over all fully contained windows of the luminance images.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

struct SequenceReport {
  std::vector<double> psnr;  // per adjacent pair
  std::vector<double> ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int frame_count = 0;

  std::string to_text() const;
};

SequenceReport sequence_consistency(const std::vector<Image>& frames);

/// Text-image alignment (e.g. a contrastive embedding model). No in-tree
/// implementation; adapters plug in here.
class AlignmentScorer {
 public:
  virtual ~AlignmentScorer() = default;
  virtual double score(const Image& image, const std::string& prompt) const = 0;
};

}  // namespace latentwarp
