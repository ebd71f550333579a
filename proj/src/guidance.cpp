#include "latentwarp/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "latentwarp/errors.hpp"

namespace latentwarp {

namespace {

void check_pair(const FeaturePair& p) {
  require_same_shape(p.f_current_warped, p.f_next, "feature_similarity_loss");
  if (p.valid_mask.height() != p.f_next.height() || p.valid_mask.width() != p.f_next.width()) {
    throw std::invalid_argument("feature_similarity_loss: mask does not match feature layout");
  }
}

struct LocationTerms {
  double dot = 0.0;
  double norm_a = 0.0;  // f_next
  double norm_b = 0.0;  // f_current_warped
};

LocationTerms location_terms(const FeaturePair& p, int y, int x) {
  LocationTerms t;
  for (int c = 0; c < p.f_next.channels(); ++c) {
    const double a = p.f_next(c, y, x);
    const double b = p.f_current_warped(c, y, x);
    t.dot += a * b;
    t.norm_a += a * a;
    t.norm_b += b * b;
  }
  t.norm_a = std::sqrt(t.norm_a);
  t.norm_b = std::sqrt(t.norm_b);
  return t;
}

bool usable(const FeaturePair& p, const LocationTerms& t, int y, int x) {
  return p.valid_mask(y, x) && t.norm_a > 0.0 && t.norm_b > 0.0;
}

double cosine(const LocationTerms& t) {
  return t.dot / std::max(t.norm_a * t.norm_b, kCosineDenominatorFloor);
}

double loss_at(const Denoiser& denoiser, const Grid& x, int timestep, const GuidanceContext& ctx,
               const Grid& f_current_warped, const Mask& valid) {
  return feature_similarity_loss(
      FeaturePair{f_current_warped, next_view_features(denoiser, x, timestep, ctx), valid});
}

DenoiserRequest feature_request(const Grid& x, int timestep, const GuidanceContext& ctx,
                                const std::string& tap) {
  DenoiserRequest r;
  r.latent = x;
  r.timestep = timestep;
  r.text = ctx.text;
  r.guidance_scale = 1.0;
  r.injection = ctx.injection;
  r.capture = {tap};
  return r;
}

}  // namespace

double feature_similarity_loss(const FeaturePair& pair) {
  check_pair(pair);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pair.f_next.height(); ++y) {
    for (int x = 0; x < pair.f_next.width(); ++x) {
      const LocationTerms t = location_terms(pair, y, x);
      if (!usable(pair, t, y, x)) continue;
      sum += 0.5 * (1.0 - cosine(t));
      ++n;
    }
  }
  if (n == 0) throw DegenerateInput("feature_similarity_loss: no valid feature locations");
  return std::clamp(sum / static_cast<double>(n), 0.0, 1.0);
}

Grid feature_similarity_loss_gradient(const FeaturePair& pair) {
  check_pair(pair);
  Grid grad(pair.f_next.shape());
  std::size_t n = 0;
  for (int y = 0; y < pair.f_next.height(); ++y) {
    for (int x = 0; x < pair.f_next.width(); ++x) {
      const LocationTerms t = location_terms(pair, y, x);
      if (!usable(pair, t, y, x)) continue;
      ++n;
      const double denom = t.norm_a * t.norm_b;
      for (int c = 0; c < pair.f_next.channels(); ++c) {
        const double a = pair.f_next(c, y, x);
        const double b = pair.f_current_warped(c, y, x);
        const double dcos = denom > kCosineDenominatorFloor
                                ? b / denom - cosine(t) * a / (t.norm_a * t.norm_a)
                                : b / kCosineDenominatorFloor;
        grad(c, y, x) = -0.5 * dcos;
      }
    }
  }
  if (n == 0) throw DegenerateInput("feature_similarity_loss: no valid feature locations");
  grad *= 1.0 / static_cast<double>(n);
  return grad;
}

std::string resolve_feature_tap(const Denoiser& denoiser, const std::string& requested) {
  const TapRegistry& taps = denoiser.taps();
  const std::string id = requested.empty() ? taps.default_feature_site : requested;
  if (id.empty() || taps.feature_site(id) == nullptr) {
    throw ConfigError("guidance: feature tap '" + id + "' is not published by the denoiser");
  }
  return id;
}

Grid next_view_features(const Denoiser& denoiser, const Grid& x, int timestep,
                        const GuidanceContext& context) {
  const std::string tap = resolve_feature_tap(denoiser, context.feature_tap);
  DenoiserResponse r = run_denoiser(denoiser, feature_request(x, timestep, context, tap));
  return std::move(r.captured_features.at(tap));
}

Grid similarity_gradient(const Denoiser& denoiser, const Grid& x_next, int timestep,
                         const GuidanceContext& context, const Grid& f_current_warped,
                         const Mask& valid_mask) {
  const std::string tap = resolve_feature_tap(denoiser, context.feature_tap);

  if (denoiser.gradient_mode() == GradientMode::analytic) {
    const DenoiserRequest req = feature_request(x_next, timestep, context, tap);
    DenoiserResponse r = run_denoiser(denoiser, req);
    const Grid cot = feature_similarity_loss_gradient(
        FeaturePair{f_current_warped, std::move(r.captured_features.at(tap)), valid_mask});
    return denoiser.feature_vjp(req, tap, cot);
  }

  Grid grad(x_next.shape());
  Grid probe = x_next;
  if (x_next.size() <= context.exact_fd_limit) {
    for (std::size_t i = 0; i < x_next.size(); ++i) {
      const double x0 = x_next.data()[i];
      const double h = 1e-3 * (1.0 + std::abs(x0));
      probe.data()[i] = x0 + h;
      const double up = loss_at(denoiser, probe, timestep, context, f_current_warped, valid_mask);
      probe.data()[i] = x0 - h;
      const double down = loss_at(denoiser, probe, timestep, context, f_current_warped, valid_mask);
      probe.data()[i] = x0;
      grad.data()[i] = (up - down) / (2.0 * h);
    }
    return grad;
  }

  // Averaged central differences along seeded Rademacher directions: an
  // unbiased estimate of the gradient up to O(h^2).
  if (context.fd_directions < 1) throw std::invalid_argument("similarity_gradient: fd_directions < 1");
  const double rms = l2_norm(x_next) / std::sqrt(static_cast<double>(x_next.size()));
  const double h = 1e-3 * (1.0 + rms);
  std::mt19937_64 rng(context.fd_seed);
  Grid dir(x_next.shape());
  for (int k = 0; k < context.fd_directions; ++k) {
    for (double& v : dir.data()) v = (rng() & 1) ? 1.0 : -1.0;
    const double up = loss_at(denoiser, x_next + dir * h, timestep, context, f_current_warped, valid_mask);
    const double down = loss_at(denoiser, x_next - dir * h, timestep, context, f_current_warped, valid_mask);
    const double slope = (up - down) / (2.0 * h);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += slope * dir.data()[i];
  }
  grad *= 1.0 / context.fd_directions;
  return grad;
}

}  // namespace latentwarp
