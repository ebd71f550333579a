#pragma once

#include <cstdint>
#include <memory>

#include "latentwarp/backends.hpp"

namespace latentwarp {

// Deterministic desk-scale backends. Every parameter is derived from the
// seed with a counter-based hash, so outputs are bit-identical for
// identical (seed, inputs) and the objects carry no mutable state.

/// Scalar time conditioning shared by the mocks.
inline double mock_timestep_embedding(int timestep) { return timestep / 1000.0; }

/// eps = s_c * x + temb(t) * (c + e0 * g0 + e1 * g1), with s_c a per-channel
/// scale in [0.5, 1.5], c a seeded constant grid and g0/g1 seeded text
/// response grids weighted by the first two embedding values.
///
/// Publishes one feature tap "mid" (per-pixel linear channel mix of the
/// latent plus a time bias) with analytic vector-Jacobian products.
class LinearMockDenoiser final : public Denoiser {
 public:
  explicit LinearMockDenoiser(std::uint64_t seed, int feature_channels = 8);

  const TapRegistry& taps() const override { return taps_; }
  DenoiserResponse predict(const DenoiserRequest& request) const override;
  GradientMode gradient_mode() const override { return GradientMode::analytic; }
  Grid feature_vjp(const DenoiserRequest& request, const std::string& tap,
                   const Grid& cotangent) const override;

  double channel_scale(int c) const;

 private:
  Grid eps_for(const Grid& latent, int timestep, const TextEmbedding& text) const;
  Grid features(const Grid& latent, int timestep) const;
  double mix(int feature, int channel) const;

  std::uint64_t seed_;
  int feature_channels_;
  TapRegistry taps_;
};

/// conv3x3 -> 2x2 average pool -> single-head self-attention (seeded
/// untrained Q/K/V maps) -> nearest upsample + residual -> conv3x3.
/// Attention site "mid.attn" and feature tap "mid.out" both live at half
/// resolution. Gradients are finite-difference only.
class TinyAttentionDenoiser final : public Denoiser {
 public:
  explicit TinyAttentionDenoiser(std::uint64_t seed, int hidden = 8);

  const TapRegistry& taps() const override { return taps_; }
  DenoiserResponse predict(const DenoiserRequest& request) const override;

  static constexpr const char* kAttentionSite = "mid.attn";
  static constexpr const char* kFeatureSite = "mid.out";

 private:
  struct Pass {
    Grid eps;
    AttentionTensors kv;
    Grid feature;
  };
  Pass run(const Grid& latent, int timestep, const TextEmbedding& text,
           const InjectionPlan* injection) const;
  double weight(int tensor, int a, int b, int c = 0, int d = 0) const;

  std::uint64_t seed_;
  int hidden_;
  TapRegistry taps_;
};

/// Linear autoencoder: average-pools the image by `factor`, then maps the
/// 3 color channels to 4 latent channels with a seeded full-rank matrix.
/// With factor 1 the round trip is exact up to clamping.
class MockAutoencoder final : public Autoencoder {
 public:
  explicit MockAutoencoder(std::uint64_t seed, int factor = 1);

  Grid encode(const Image& image) const override;
  Image decode(const Grid& latent) const override;
  int spatial_factor() const override { return factor_; }
  int latent_channels() const override { return 4; }

 private:
  int factor_;
  double encode_[4][3];
  double decode_[3][4];
};

/// Ground plane receding toward the top of the frame plus one to three
/// seeded frontal boxes; ignores image content, depends only on its size.
class ProceduralDepth final : public DepthEstimator {
 public:
  explicit ProceduralDepth(std::uint64_t scene_seed) : seed_(scene_seed) {}
  DepthMap estimate(const Image& image) const override;
  DepthMap generate(int width, int height) const;

 private:
  std::uint64_t seed_;
};

class MockTextEncoder final : public TextEncoder {
 public:
  explicit MockTextEncoder(int dim = 8) : dim_(dim) {}
  TextEmbedding encode(const std::string& prompt) const override;

 private:
  int dim_;
};

enum class MockDenoiserKind { linear, attention };

struct MockSuiteOptions {
  std::uint64_t seed = 0;
  MockDenoiserKind denoiser = MockDenoiserKind::attention;
  int autoencoder_factor = 1;
  std::uint64_t scene_seed = 1;
};

BackendSuite make_mock_suite(const MockSuiteOptions& options = {});

}  // namespace latentwarp
