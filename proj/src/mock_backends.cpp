#include "latentwarp/mock_backends.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "latentwarp/errors.hpp"
#include "latentwarp/random.hpp"

namespace latentwarp {

namespace {

using u64 = std::uint64_t;

double signed_hash(std::initializer_list<u64> key) { return 2.0 * hash_uniform(key) - 1.0; }

double embedding_value(const TextEmbedding& e, std::size_t i) {
  return i < e.values.size() ? e.values[i] : 0.0;
}

// temb(t) * (c + e0 * g0 + e1 * g1); tensor ids 100..102 are reserved for it.
void add_conditioning(Grid& eps, u64 seed, int timestep, const TextEmbedding& text) {
  const double temb = mock_timestep_embedding(timestep);
  const double e0 = embedding_value(text, 0);
  const double e1 = embedding_value(text, 1);
  for (int c = 0; c < eps.channels(); ++c) {
    for (int y = 0; y < eps.height(); ++y) {
      for (int x = 0; x < eps.width(); ++x) {
        const u64 uc = static_cast<u64>(c), uy = static_cast<u64>(y), ux = static_cast<u64>(x);
        const double base = 0.2 * signed_hash({seed, 100, uc, uy, ux});
        const double g0 = 0.2 * signed_hash({seed, 101, uc, uy, ux});
        const double g1 = 0.2 * signed_hash({seed, 102, uc, uy, ux});
        eps(c, y, x) += temb * (base + e0 * g0 + e1 * g1);
      }
    }
  }
}

Grid combine_guidance(const Grid& uncond, const Grid& cond, double scale) {
  Grid out = uncond;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] += scale * (cond.data()[i] - uncond.data()[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// LinearMockDenoiser

LinearMockDenoiser::LinearMockDenoiser(u64 seed, int feature_channels)
    : seed_(seed), feature_channels_(feature_channels) {
  taps_.feature_sites.push_back({"mid", 1, feature_channels});
  taps_.default_feature_site = "mid";
}

double LinearMockDenoiser::channel_scale(int c) const {
  return 0.5 + hash_uniform({seed_, 1, static_cast<u64>(c)});
}

double LinearMockDenoiser::mix(int feature, int channel) const {
  return signed_hash({seed_, 5, static_cast<u64>(feature), static_cast<u64>(channel)});
}

Grid LinearMockDenoiser::eps_for(const Grid& latent, int timestep, const TextEmbedding& text) const {
  Grid eps(latent.shape());
  for (int c = 0; c < latent.channels(); ++c) {
    const double s = channel_scale(c);
    auto in = latent.channel(c);
    auto out = eps.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = s * in[i];
  }
  add_conditioning(eps, seed_, timestep, text);
  return eps;
}

Grid LinearMockDenoiser::features(const Grid& latent, int timestep) const {
  const double temb = mock_timestep_embedding(timestep);
  Grid f(feature_channels_, latent.height(), latent.width());
  for (int j = 0; j < feature_channels_; ++j) {
    const double bias = 0.5 * signed_hash({seed_, 6, static_cast<u64>(j)}) * temb;
    auto out = f.channel(j);
    std::fill(out.begin(), out.end(), bias);
    for (int c = 0; c < latent.channels(); ++c) {
      const double m = mix(j, c);
      auto in = latent.channel(c);
      for (std::size_t i = 0; i < in.size(); ++i) out[i] += m * in[i];
    }
  }
  return f;
}

DenoiserResponse LinearMockDenoiser::predict(const DenoiserRequest& r) const {
  DenoiserResponse resp;
  Grid cond = eps_for(r.latent, r.timestep, r.text);
  if (r.guidance_scale != 1.0) {
    resp.eps = combine_guidance(eps_for(r.latent, r.timestep, r.uncond), cond, r.guidance_scale);
  } else {
    resp.eps = std::move(cond);
  }
  if (r.capture.count("mid")) resp.captured_features["mid"] = features(r.latent, r.timestep);
  return resp;
}

Grid LinearMockDenoiser::feature_vjp(const DenoiserRequest& r, const std::string& tap,
                                     const Grid& cotangent) const {
  if (tap != "mid") throw ConfigError("LinearMockDenoiser: unknown feature tap '" + tap + "'");
  if (cotangent.channels() != feature_channels_ || cotangent.height() != r.latent.height() ||
      cotangent.width() != r.latent.width()) {
    throw std::invalid_argument("LinearMockDenoiser::feature_vjp: cotangent shape mismatch");
  }
  Grid g(r.latent.shape());
  for (int c = 0; c < g.channels(); ++c) {
    auto out = g.channel(c);
    for (int j = 0; j < feature_channels_; ++j) {
      const double m = mix(j, c);
      auto cot = cotangent.channel(j);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += m * cot[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// TinyAttentionDenoiser

TinyAttentionDenoiser::TinyAttentionDenoiser(u64 seed, int hidden) : seed_(seed), hidden_(hidden) {
  taps_.attention_sites.push_back({kAttentionSite, 2});
  taps_.feature_sites.push_back({kFeatureSite, 2, hidden});
  taps_.default_feature_site = kFeatureSite;
}

double TinyAttentionDenoiser::weight(int tensor, int a, int b, int c, int d) const {
  return signed_hash({seed_, static_cast<u64>(tensor), static_cast<u64>(a), static_cast<u64>(b),
                      static_cast<u64>(c), static_cast<u64>(d)});
}

TinyAttentionDenoiser::Pass TinyAttentionDenoiser::run(const Grid& x, int timestep,
                                                       const TextEmbedding& text,
                                                       const InjectionPlan* injection) const {
  const int C = x.channels(), H = x.height(), W = x.width(), D = hidden_;
  if (H % 2 != 0 || W % 2 != 0) {
    throw std::invalid_argument("TinyAttentionDenoiser: latent dims must be even, got " +
                                x.shape().to_string());
  }
  const double temb = mock_timestep_embedding(timestep);

  // conv1: C -> D, zero padding.
  const double s1 = 1.0 / std::sqrt(9.0 * C);
  std::vector<double> w1(static_cast<std::size_t>(D) * C * 9);
  for (int d = 0; d < D; ++d)
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < 9; ++k) w1[(static_cast<std::size_t>(d) * C + c) * 9 + k] = s1 * weight(1, d, c, k);
  Grid h1(D, H, W);
  for (int d = 0; d < D; ++d) {
    const double bias = 0.1 * weight(2, d, 0) + temb * weight(11, d, 0);
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        double acc = bias;
        for (int c = 0; c < C; ++c) {
          const double* wk = &w1[(static_cast<std::size_t>(d) * C + c) * 9];
          for (int ky = -1; ky <= 1; ++ky) {
            const int yy = y + ky;
            if (yy < 0 || yy >= H) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              const int xs = xx + kx;
              if (xs < 0 || xs >= W) continue;
              acc += wk[(ky + 1) * 3 + (kx + 1)] * x(c, yy, xs);
            }
          }
        }
        h1(d, y, xx) = acc;
      }
    }
  }

  const int h = H / 2, w = W / 2;
  Grid pooled(D, h, w);
  for (int d = 0; d < D; ++d)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        pooled(d, y, xx) = 0.25 * (h1(d, 2 * y, 2 * xx) + h1(d, 2 * y, 2 * xx + 1) +
                                   h1(d, 2 * y + 1, 2 * xx) + h1(d, 2 * y + 1, 2 * xx + 1));

  const double sq = 1.5 / std::sqrt(static_cast<double>(D));
  TokenMatrix wq(D, D), wk(D, D), wv(D, D);
  for (int a = 0; a < D; ++a) {
    for (int b = 0; b < D; ++b) {
      wq(a, b) = sq * weight(3, a, b);
      wk(a, b) = sq * weight(4, a, b);
      wv(a, b) = sq * weight(5, a, b);
    }
  }
  const TokenMatrix tokens = grid_to_tokens(pooled);
  Pass pass;
  pass.kv.site_id = kAttentionSite;
  pass.kv.height = h;
  pass.kv.width = w;
  pass.kv.q = tokens * wq;
  pass.kv.k = tokens * wk;
  pass.kv.v = tokens * wv;

  TokenMatrix attended;
  if (injection != nullptr && injection->find(kAttentionSite) != nullptr) {
    attended = cross_view_attention(pass.kv.q, *injection, kAttentionSite);
  } else {
    attended = attention(pass.kv.q, pass.kv.k, pass.kv.v);
  }
  pass.feature = tokens_to_grid(attended, h, w);

  for (int d = 0; d < D; ++d)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) h1(d, y, xx) += pass.feature(d, y / 2, xx / 2);

  // conv2: D -> C, then the linear skip and conditioning.
  const double s2 = 1.0 / std::sqrt(9.0 * D);
  std::vector<double> w2(static_cast<std::size_t>(C) * D * 9);
  for (int c = 0; c < C; ++c)
    for (int d = 0; d < D; ++d)
      for (int k = 0; k < 9; ++k) w2[(static_cast<std::size_t>(c) * D + d) * 9 + k] = s2 * weight(6, c, d, k);
  pass.eps = Grid(x.shape());
  for (int c = 0; c < C; ++c) {
    const double skip = 0.5 + hash_uniform({seed_, 7, static_cast<u64>(c)});
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        double acc = 0.0;
        for (int d = 0; d < D; ++d) {
          const double* wk2 = &w2[(static_cast<std::size_t>(c) * D + d) * 9];
          for (int ky = -1; ky <= 1; ++ky) {
            const int yy = y + ky;
            if (yy < 0 || yy >= H) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              const int xs = xx + kx;
              if (xs < 0 || xs >= W) continue;
              acc += wk2[(ky + 1) * 3 + (kx + 1)] * h1(d, yy, xs);
            }
          }
        }
        pass.eps(c, y, xx) = skip * x(c, y, xx) + 0.1 * acc;
      }
    }
  }
  add_conditioning(pass.eps, seed_, timestep, text);
  return pass;
}

DenoiserResponse TinyAttentionDenoiser::predict(const DenoiserRequest& r) const {
  const InjectionPlan* plan = r.injection.get();
  Pass cond = run(r.latent, r.timestep, r.text, plan);
  DenoiserResponse resp;
  if (r.guidance_scale != 1.0) {
    Pass uncond = run(r.latent, r.timestep, r.uncond, plan);
    resp.eps = combine_guidance(uncond.eps, cond.eps, r.guidance_scale);
  } else {
    resp.eps = std::move(cond.eps);
  }
  if (r.capture.count(kAttentionSite)) resp.captured_kv[kAttentionSite] = std::move(cond.kv);
  if (r.capture.count(kFeatureSite)) resp.captured_features[kFeatureSite] = std::move(cond.feature);
  return resp;
}

// ---------------------------------------------------------------------------
// MockAutoencoder

MockAutoencoder::MockAutoencoder(u64 seed, int factor) : factor_(factor) {
  if (factor < 1) throw std::invalid_argument("MockAutoencoder: factor must be >= 1");
  Eigen::Matrix<double, 4, 3> a;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 3; ++c) {
      a(r, c) = (r == c ? 1.0 : 0.0) + 0.3 * signed_hash({seed, 20, static_cast<u64>(r), static_cast<u64>(c)});
    }
  }
  const Eigen::Matrix<double, 3, 4> pinv = (a.transpose() * a).inverse() * a.transpose();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) encode_[r][c] = a(r, c);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) decode_[r][c] = pinv(r, c);
}

Grid MockAutoencoder::encode(const Image& image) const {
  if (image.channels() != 3) throw std::invalid_argument("MockAutoencoder::encode: expected RGB");
  if (image.height() % factor_ != 0 || image.width() % factor_ != 0) {
    throw std::invalid_argument("MockAutoencoder::encode: image size not divisible by factor");
  }
  const int h = image.height() / factor_, w = image.width() / factor_;
  const double inv_area = 1.0 / (factor_ * factor_);
  Grid latent(4, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double p[3];
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor_; ++dy)
          for (int dx = 0; dx < factor_; ++dx) sum += image(c, y * factor_ + dy, x * factor_ + dx);
        p[c] = 2.0 * sum * inv_area - 1.0;
      }
      for (int k = 0; k < 4; ++k) {
        latent(k, y, x) = encode_[k][0] * p[0] + encode_[k][1] * p[1] + encode_[k][2] * p[2];
      }
    }
  }
  return latent;
}

Image MockAutoencoder::decode(const Grid& latent) const {
  if (latent.channels() != 4) throw std::invalid_argument("MockAutoencoder::decode: expected 4 channels");
  Image image(3, latent.height() * factor_, latent.width() * factor_);
  for (int y = 0; y < latent.height(); ++y) {
    for (int x = 0; x < latent.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        double p = 0.0;
        for (int k = 0; k < 4; ++k) p += decode_[c][k] * latent(k, y, x);
        const double v = std::clamp(0.5 * (p + 1.0), 0.0, 1.0);
        for (int dy = 0; dy < factor_; ++dy)
          for (int dx = 0; dx < factor_; ++dx) image(c, y * factor_ + dy, x * factor_ + dx) = v;
      }
    }
  }
  return image;
}

// ---------------------------------------------------------------------------
// ProceduralDepth

DepthMap ProceduralDepth::estimate(const Image& image) const {
  return generate(image.width(), image.height());
}

DepthMap ProceduralDepth::generate(int width, int height) const {
  if (width < 1 || height < 2) throw std::invalid_argument("ProceduralDepth: image too small");
  DepthMap depth(width, height, 0.0, DepthSource::procedural);
  for (int y = 0; y < height; ++y) {
    const double r = 1.0 - static_cast<double>(y) / (height - 1);
    const double plane = 2.0 + 78.0 * r * r;
    for (int x = 0; x < width; ++x) depth(y, x) = plane;
  }
  const int boxes = 1 + static_cast<int>(hash_key({seed_, 30}) % 3);
  for (int b = 0; b < boxes; ++b) {
    const u64 ub = static_cast<u64>(b);
    const double bx0 = (0.1 + 0.6 * hash_uniform({seed_, 31, ub})) * width;
    const double bw = (0.1 + 0.15 * hash_uniform({seed_, 32, ub})) * width;
    const double by0 = (0.2 + 0.4 * hash_uniform({seed_, 33, ub})) * height;
    const double bh = (0.15 + 0.15 * hash_uniform({seed_, 34, ub})) * height;
    const double bd = 3.0 + 17.0 * hash_uniform({seed_, 35, ub});
    for (int y = 0; y < height; ++y) {
      if (y < by0 || y >= by0 + bh) continue;
      for (int x = 0; x < width; ++x) {
        if (x < bx0 || x >= bx0 + bw) continue;
        depth(y, x) = std::min(depth(y, x), bd);
      }
    }
  }
  return depth;
}

// ---------------------------------------------------------------------------
// MockTextEncoder

TextEmbedding MockTextEncoder::encode(const std::string& prompt) const {
  TextEmbedding e;
  e.id = fnv1a(prompt);
  e.prompt = prompt;
  e.values.resize(static_cast<std::size_t>(dim_));
  for (int i = 0; i < dim_; ++i) {
    e.values[static_cast<std::size_t>(i)] = std::sqrt(3.0) * signed_hash({e.id, 40, static_cast<u64>(i)});
  }
  return e;
}

BackendSuite make_mock_suite(const MockSuiteOptions& options) {
  BackendSuite suite;
  if (options.denoiser == MockDenoiserKind::linear) {
    suite.name = "mock-linear";
    suite.denoiser = std::make_shared<LinearMockDenoiser>(options.seed);
  } else {
    suite.name = "mock-attention";
    suite.denoiser = std::make_shared<TinyAttentionDenoiser>(options.seed);
  }
  suite.autoencoder = std::make_shared<MockAutoencoder>(options.seed, options.autoencoder_factor);
  suite.depth_estimator = std::make_shared<ProceduralDepth>(options.scene_seed);
  suite.text_encoder = std::make_shared<MockTextEncoder>();
  return suite;
}

}  // namespace latentwarp
