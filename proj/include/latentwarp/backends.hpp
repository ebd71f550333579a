#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "latentwarp/attention.hpp"
#include "latentwarp/geometry.hpp"
#include "latentwarp/grid.hpp"

namespace latentwarp {

/// Opaque text conditioning. `id` identifies the prompt; it is what the
/// trajectory log records to show which embedding produced a frame.
struct TextEmbedding {
  std::uint64_t id = 0;
  std::string prompt;
  std::vector<double> values;

  bool operator==(const TextEmbedding&) const = default;
};

struct AttentionSite {
  std::string id;
  int downsample = 1;  // latent resolution / site resolution
};

struct FeatureSite {
  std::string id;
  int downsample = 1;
  int channels = 0;
};

struct TapRegistry {
  std::vector<AttentionSite> attention_sites;
  std::vector<FeatureSite> feature_sites;
  std::string default_feature_site;

  const AttentionSite* attention_site(const std::string& id) const;
  const FeatureSite* feature_site(const std::string& id) const;
  bool has(const std::string& id) const { return attention_site(id) || feature_site(id); }
  std::vector<std::string> attention_site_ids() const;

  /// Throws std::invalid_argument unless every site divides the latent resolution.
  void validate_for(const Shape& latent) const;
};

struct DenoiserRequest {
  Grid latent;
  int timestep = 1;
  TextEmbedding text;
  TextEmbedding uncond;         // used when guidance_scale != 1
  double guidance_scale = 1.0;  // classifier-free guidance weight
  std::shared_ptr<const InjectionPlan> injection;
  std::set<std::string> capture;
};

struct DenoiserResponse {
  Grid eps;
  std::map<std::string, AttentionTensors> captured_kv;
  std::map<std::string, Grid> captured_features;
};

enum class GradientMode { analytic, finite_difference };

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual const TapRegistry& taps() const = 0;
  virtual DenoiserResponse predict(const DenoiserRequest& request) const = 0;
  virtual GradientMode gradient_mode() const { return GradientMode::finite_difference; }

  /// Vector-Jacobian product of feature tap `tap` (conditional branch) with
  /// respect to the request latent. Only backends reporting analytic
  /// gradients implement it.
  virtual Grid feature_vjp(const DenoiserRequest& request, const std::string& tap,
                           const Grid& cotangent) const;
};

class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual Grid encode(const Image& image) const = 0;
  virtual Image decode(const Grid& latent) const = 0;
  virtual int spatial_factor() const = 0;
  virtual int latent_channels() const = 0;
};

class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual DepthMap estimate(const Image& image) const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const std::string& prompt) const = 0;
};

struct BackendSuite {
  std::string name;
  std::shared_ptr<const Denoiser> denoiser;
  std::shared_ptr<const Autoencoder> autoencoder;
  std::shared_ptr<const DepthEstimator> depth_estimator;
  std::shared_ptr<const TextEncoder> text_encoder;

  bool complete() const { return denoiser && autoencoder && depth_estimator && text_encoder; }
  GradientMode gradient_mode() const { return denoiser->gradient_mode(); }
};

/// Calls the denoiser after checking the request against its tap registry,
/// then checks the response: eps shape and every requested tap must be
/// present. Violations throw; a missing tap is never silently dropped.
DenoiserResponse run_denoiser(const Denoiser& denoiser, const DenoiserRequest& request);

/// Relative depth conversion for monocular disparity output:
/// depth = 1 / (scale * normalized_disparity + offset), clamped.
struct DisparityConversion {
  double scale = 1.0;
  double offset = 0.01;
  double min_depth = 0.5;
  double max_depth = 100.0;
};

DepthMap disparity_to_depth(const std::vector<double>& disparity, int width, int height,
                            const DisparityConversion& conversion = {});

/// Routes every call of every backend in the suite through one shared
/// single-consumer queue, so one model instance sees one request at a time.
BackendSuite serialize_backend_access(BackendSuite suite);

}  // namespace latentwarp
