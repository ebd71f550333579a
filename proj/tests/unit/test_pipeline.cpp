#include <atomic>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "latentwarp/errors.hpp"
#include "latentwarp/image_io.hpp"
#include "latentwarp/mock_backends.hpp"
#include "latentwarp/pipeline.hpp"

using namespace latentwarp;

namespace {

BackendSuite suite(MockDenoiserKind kind) {
  MockSuiteOptions o;
  o.seed = 3;
  o.denoiser = kind;
  return make_mock_suite(o);
}

PipelineConfig small_config(int n = 16) {
  PipelineConfig c;
  c.latent_shape = {4, n, n};
  c.fd_directions = 2;
  return c;
}

PipelineConfig identity_config(int n = 16) {
  PipelineConfig c = small_config(n);
  c.sigma = std::numeric_limits<double>::infinity();
  c.lambda = 0.0;
  c.injection_sites = std::vector<std::string>{};
  c.stochastic_lift = false;
  c.guidance_scale = 1.0;
  return c;
}

Image smooth_image(int n) {
  Image img(3, n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      img(0, y, x) = 0.2 + 0.6 * x / (n - 1);
      img(1, y, x) = 0.3 + 0.4 * y / (n - 1);
      img(2, y, x) = 0.5 + 0.2 * std::sin(0.4 * (x + y));
    }
  return quantize_8bit(img);
}

// Decoder that fails on demand.
class FlakyAutoencoder final : public Autoencoder {
 public:
  FlakyAutoencoder(std::shared_ptr<const Autoencoder> inner, std::shared_ptr<std::atomic<bool>> fail)
      : inner_(std::move(inner)), fail_(std::move(fail)) {}
  Grid encode(const Image& image) const override { return inner_->encode(image); }
  Image decode(const Grid& latent) const override {
    if (*fail_) throw std::runtime_error("decoder fault");
    return inner_->decode(latent);
  }
  int spatial_factor() const override { return inner_->spatial_factor(); }
  int latent_channels() const override { return inner_->latent_channels(); }

 private:
  std::shared_ptr<const Autoencoder> inner_;
  std::shared_ptr<std::atomic<bool>> fail_;
};

}  // namespace

TEST_CASE("config validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.t1 == 21);
  CHECK(c.t2 == 441);
  CHECK(c.sigma == 20.0);
  CHECK(c.lambda == 300.0);
  c.t1 = 30;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PipelineConfig{};
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PipelineConfig{};
  c.sigma = std::numeric_limits<double>::infinity();
  CHECK_NOTHROW(c.validate());
  StepOverrides o;
  o.t2 = 21;
  CHECK_THROWS_AS(apply_overrides(PipelineConfig{}, o), std::invalid_argument);
}

TEST_CASE("degenerate identity step reproduces the current frame") {
  for (auto kind : {MockDenoiserKind::linear, MockDenoiserKind::attention}) {
    Pipeline p(suite(kind));
    const auto cfg = identity_config();
    SessionState s = p.init_session({"a still lake", smooth_image(16)}, cfg);
    const Frame f = p.step(s, CameraPose::identity());
    CHECK(max_abs_diff(f.image, smooth_image(16)) <= 1e-3);
    CHECK(f.hole_fraction == 0.0);
  }
}

TEST_CASE("a forward step opens holes at the border and stays finite") {
  Pipeline p(suite(MockDenoiserKind::attention));
  SessionState s = p.init_session({"a mountain road", std::nullopt}, small_config(32));
  CHECK(s.current_image.shape() == Shape{3, 32, 32});
  for (double v : s.current_image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const Frame f = p.step(s, forward_entry(0.5));
  CHECK(f.hole_fraction > 0.0);
  CHECK(f.hole_fraction < 0.5);
  CHECK(all_finite(f.latent));
  CHECK(f.index == 1);
  std::vector<std::string> stages;
  for (const auto& [name, ms] : f.timing_ms) stages.push_back(name);
  CHECK(stages == std::vector<std::string>{"text", "encode", "invert", "warp", "lift", "denoise", "decode", "depth"});
  CHECK(s.frame_index == 1);
  CHECK(s.log.size() == 1);
  CHECK(s.current_image == f.image);
}

TEST_CASE("identical inputs give identical frames") {
  Pipeline p(suite(MockDenoiserKind::attention));
  SessionState a = p.init_session({"coral reef", std::nullopt}, small_config(32));
  SessionState b = p.init_session({"coral reef", std::nullopt}, small_config(32));
  CHECK(a.current_image == b.current_image);
  for (int i = 0; i < 2; ++i) CHECK(p.step(a, forward_entry(0.5)).image == p.step(b, forward_entry(0.5)).image);
  PipelineConfig other = small_config(32);
  other.seed = 99;
  CHECK(p.init_session({"coral reef", std::nullopt}, other).current_image != a.current_image);
}

TEST_CASE("a scene shuttle switches the embedding and keeps it") {
  Pipeline p(suite(MockDenoiserKind::linear));
  SessionState s = p.init_session({"a green valley", std::nullopt}, small_config());
  const auto first = s.text.id;
  TrajectoryEntry e = forward_entry(0.3);
  e.prompt = "a snowy valley";
  const Frame f1 = p.step(s, e);
  CHECK(f1.prompt == "a snowy valley");
  CHECK(f1.embedding_id != first);
  CHECK(s.prompt == "a snowy valley");
  const Frame f2 = p.step(s, forward_entry(0.3));
  CHECK(f2.prompt == "a snowy valley");
  CHECK(f2.embedding_id == f1.embedding_id);
  REQUIRE(s.log.size() == 2);
  CHECK(s.log[0].entry.prompt == std::optional<std::string>("a snowy valley"));
  CHECK(s.log[1].embedding_id == f1.embedding_id);
}

TEST_CASE("a failing stage leaves the session untouched") {
  auto fail = std::make_shared<std::atomic<bool>>(false);
  BackendSuite b = suite(MockDenoiserKind::linear);
  b.autoencoder = std::make_shared<FlakyAutoencoder>(b.autoencoder, fail);
  Pipeline p(b);
  SessionState s = p.init_session({"harbor", std::nullopt}, small_config());
  p.step(s, forward_entry(0.5));
  const SessionState before = s;
  *fail = true;
  try {
    p.step(s, forward_entry(0.5));
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "decode");
  }
  CHECK(s.frame_index == before.frame_index);
  CHECK(s.current_image == before.current_image);
  CHECK(s.log.size() == before.log.size());

  *fail = false;
  std::vector<TrajectoryEntry> traj(3, forward_entry(0.5));
  traj[1].translation = {std::nan(""), 0.0, 0.0};
  const TrajectoryRun run = p.run_trajectory(s, traj);
  CHECK(run.frames.size() == 1);
  REQUIRE(run.failure);
  CHECK(run.failure->entry_index == 1);
  CHECK(run.failure->stage == "input");
  CHECK(s.frame_index == 2);
}

TEST_CASE("bad inputs are rejected before any stage runs") {
  Pipeline p(suite(MockDenoiserKind::attention));
  CHECK_THROWS_AS(p.init_session({"x", Image(3, 8, 8)}, small_config()), std::invalid_argument);
  Image bright = smooth_image(16);
  bright(0, 0, 0) = 1.5;
  CHECK_THROWS_AS(p.init_session({"x", bright}, small_config()), std::invalid_argument);

  SessionState s = p.init_session({"x", smooth_image(16)}, small_config());
  s.config.injection_sites = std::vector<std::string>{"down.attn"};
  CHECK_THROWS_AS(p.step(s, forward_entry(0.5)), ConfigError);
  s.config.injection_sites.reset();
  s.config.feature_tap = "nowhere";
  CHECK_THROWS_AS(p.step(s, forward_entry(0.5)), ConfigError);
  s.config.feature_tap.clear();
  CameraPose bad;
  bad.rotation(1, 1) = -1.0;
  CHECK_THROWS_AS(p.step(s, bad), std::invalid_argument);
  CHECK(s.frame_index == 0);

  PipelineConfig odd = small_config();
  odd.latent_shape = {4, 15, 15};
  CHECK_THROWS_AS(p.init_session({"x", std::nullopt}, odd), std::invalid_argument);
  CHECK_THROWS_AS(Pipeline(BackendSuite{}), ConfigError);
}

TEST_CASE("per-step overrides apply to that step only") {
  Pipeline p(suite(MockDenoiserKind::linear));
  SessionState a = p.init_session({"meadow", smooth_image(16)}, small_config());
  SessionState b = a;
  TrajectoryEntry e = forward_entry(0.5);
  e.overrides.lambda = 0.0;
  e.overrides.sigma = std::numeric_limits<double>::infinity();
  const Frame fa = p.step(a, e);
  const Frame fb = p.step(b, forward_entry(0.5));
  CHECK(fa.image != fb.image);
  CHECK(a.config == b.config);
  CHECK(a.log[0].entry.overrides.lambda == 0.0);
}

TEST_CASE("pose and entry step forms agree") {
  Pipeline p(suite(MockDenoiserKind::linear));
  SessionState a = p.init_session({"canal", smooth_image(16)}, small_config());
  SessionState b = a;
  TrajectoryEntry e;
  e.euler = std::array<double, 3>{5.0, 0.0, 0.0};
  e.translation = {0.0, 0.0, 0.4};
  CHECK(p.step(a, e).image == p.step(b, e.to_pose()).image);
}
