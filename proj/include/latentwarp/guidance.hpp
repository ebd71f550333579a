#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "latentwarp/backends.hpp"
#include "latentwarp/grid.hpp"

namespace latentwarp {

struct FeaturePair {
  Grid f_current_warped;
  Grid f_next;
  Mask valid_mask;  // feature resolution; false at warp holes
};

inline constexpr double kCosineDenominatorFloor = 1e-8;

/// Mean over usable locations of (1 - cos) / 2, where cos is the channel-axis
/// cosine similarity. A location is usable when it is valid and neither
/// feature vector is exactly zero. Throws DegenerateInput if none is usable.
double feature_similarity_loss(const FeaturePair& pair);

/// d loss / d f_next, same shape as f_next.
Grid feature_similarity_loss_gradient(const FeaturePair& pair);

struct GuidanceContext {
  TextEmbedding text;
  std::shared_ptr<const InjectionPlan> injection;
  std::string feature_tap;  // empty: the backend's default feature site

  // Finite-difference settings, used when the backend has no analytic gradients.
  std::size_t exact_fd_limit = 1024;  // latents up to this many values use coordinate differences
  int fd_directions = 16;
  std::uint64_t fd_seed = 0;
};

/// Resolves the configured tap against the registry; ConfigError if absent.
std::string resolve_feature_tap(const Denoiser& denoiser, const std::string& requested);

/// Feature tap output for the conditional branch at (x, t).
Grid next_view_features(const Denoiser& denoiser, const Grid& x, int timestep,
                        const GuidanceContext& context);

/// Gradient of feature_similarity_loss with respect to x_next; the warped
/// current-view features are constants.
Grid similarity_gradient(const Denoiser& denoiser, const Grid& x_next, int timestep,
                         const GuidanceContext& context, const Grid& f_current_warped,
                         const Mask& valid_mask);

}  // namespace latentwarp
