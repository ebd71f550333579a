#include "latentwarp/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "latentwarp/attention.hpp"
#include "latentwarp/errors.hpp"
#include "latentwarp/guidance.hpp"
#include "latentwarp/image_io.hpp"
#include "latentwarp/random.hpp"
#include "latentwarp/spectral.hpp"

namespace latentwarp {

namespace {

// Stream tags for keyed noise draws.
constexpr std::uint64_t kInitNoise = 0x696e6974;
constexpr std::uint64_t kLiftNoise = 0x6c696674;
constexpr std::uint64_t kProbeNoise = 0x70726f62;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("PipelineConfig: " + what);
}

using Timings = std::vector<std::pair<std::string, double>>;

// Runs one stage, records its duration and tags any failure with its name.
template <typename F>
auto run_stage(const char* name, Timings& timings, F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  try {
    auto result = fn();
    const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - start;
    timings.emplace_back(name, took.count());
    return result;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Grid predict_eps(const Denoiser& denoiser, const Grid& x, int t, const TextEmbedding& text,
                 const TextEmbedding& uncond, double scale,
                 std::shared_ptr<const InjectionPlan> injection = nullptr) {
  DenoiserRequest r;
  r.latent = x;
  r.timestep = t;
  r.text = text;
  r.uncond = uncond;
  r.guidance_scale = scale;
  r.injection = std::move(injection);
  return run_denoiser(denoiser, r).eps;
}

std::vector<std::string> resolve_injection_sites(const PipelineConfig& c, const TapRegistry& taps) {
  if (!c.injection_sites) return taps.attention_site_ids();
  for (const auto& id : *c.injection_sites) {
    if (taps.attention_site(id) == nullptr) {
      throw ConfigError("injection site '" + id + "' is not published by the denoiser");
    }
  }
  return *c.injection_sites;
}

Mask valid_mask_at(const WarpResult& warp, int width, int height) {
  const Mask& holes = (warp.width == width && warp.height == height)
                          ? warp.hole_mask
                          : resample_warp(warp, width, height).hole_mask;
  Mask valid(height, width);
  for (std::size_t i = 0; i < valid.size(); ++i) valid.set(i, !holes[i]);
  return valid;
}

void check_image_geometry(const Image& image, const PipelineConfig& c, const Autoencoder& ae) {
  const int f = ae.spatial_factor();
  if (image.channels() != 3 || image.height() != c.latent_shape.height * f ||
      image.width() != c.latent_shape.width * f) {
    throw std::invalid_argument("image " + image.shape().to_string() + " does not match latent " +
                                c.latent_shape.to_string() + " at spatial factor " + std::to_string(f));
  }
}

}  // namespace

void PipelineConfig::validate() const {
  require(total_steps >= 2, "total_steps must be >= 2");
  require(t1 >= 1 && t1 < t2 && t2 < total_steps, "need 1 <= t1 < t2 < total_steps");
  make_step_plan(total_steps, ddim_steps, t1, t2);
  require(sigma >= 0.0, "sigma must be >= 0");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
  require(guidance_scale >= 0.0 && std::isfinite(guidance_scale), "guidance_scale must be >= 0");
  require(inversion_guidance_scale >= 0.0 && std::isfinite(inversion_guidance_scale),
          "inversion_guidance_scale must be >= 0");
  require(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0, "need 0 < beta_start < beta_end < 1");
  require(injection_t_min <= injection_t_max, "injection_t_min exceeds injection_t_max");
  require(inversion_refinement >= 0, "inversion_refinement must be >= 0");
  require(latent_shape.channels >= 1 && latent_shape.height >= 2 && latent_shape.width >= 2,
          "latent_shape must be at least 1x2x2");
  require(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0, "horizontal_fov_deg must lie in (0, 180)");
  require(fd_directions >= 1, "fd_directions must be >= 1");
}

PipelineConfig apply_overrides(PipelineConfig c, const StepOverrides& o) {
  if (o.sigma) c.sigma = *o.sigma;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.guidance_scale) c.guidance_scale = *o.guidance_scale;
  if (o.t1) c.t1 = *o.t1;
  if (o.t2) c.t2 = *o.t2;
  c.validate();
  return c;
}

TrajectoryEntry entry_from_pose(const CameraPose& pose) {
  const Eigen::Matrix3d rm = pose.rotation.transpose();
  const Eigen::Vector3d tm = -(rm * pose.translation);
  TrajectoryEntry e;
  std::array<double, 9> r{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[static_cast<std::size_t>(i * 3 + k)] = rm(i, k);
  e.rotation = r;
  e.translation = {tm[0] == 0.0 ? 0.0 : tm[0], tm[1] == 0.0 ? 0.0 : tm[1], tm[2] == 0.0 ? 0.0 : tm[2]};
  return e;
}

Pipeline::Pipeline(BackendSuite backends) : backends_(std::move(backends)) {
  if (!backends_.complete()) throw ConfigError("Pipeline: backend suite '" + backends_.name + "' is incomplete");
}

SessionState Pipeline::init_session(const SessionStart& start, const PipelineConfig& config) const {
  config.validate();
  const Denoiser& denoiser = *backends_.denoiser;
  denoiser.taps().validate_for(config.latent_shape);
  Timings timings;

  SessionState s;
  s.config = config;
  s.prompt = start.prompt;
  s.text = run_stage("text", timings, [&] { return backends_.text_encoder->encode(start.prompt); });

  if (start.image) {
    check_image_geometry(*start.image, config, *backends_.autoencoder);
    for (double v : start.image->data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("start image values must lie in [0, 1]");
    }
    s.current_image = *start.image;
  } else {
    const NoiseSchedule sched = make_schedule(config.schedule, config.total_steps, config.beta_start, config.beta_end);
    const StepPlan plan = make_step_plan(config.total_steps, config.ddim_steps, config.t1, config.t2);
    s.current_image = run_stage("generate", timings, [&] {
      const TextEmbedding uncond = backends_.text_encoder->encode(config.negative_prompt);
      const EpsFunction eps = [&](const Grid& x, int t) {
        return predict_eps(denoiser, x, t, s.text, uncond, config.guidance_scale);
      };
      const Grid noise = normal_grid(config.latent_shape, hash_key({config.seed, 0, kInitNoise}));
      const Grid x0 = ddim_sample_from(noise, plan, static_cast<int>(plan.timesteps.size()) - 1, eps, sched);
      return quantize_8bit(backends_.autoencoder->decode(x0));
    });
    check_image_geometry(s.current_image, config, *backends_.autoencoder);
  }

  s.current_depth = run_stage("depth", timings, [&] {
    DepthMap d = backends_.depth_estimator->estimate(s.current_image);
    d.validate();
    if (d.width != s.current_image.width() || d.height != s.current_image.height()) {
      throw std::runtime_error("depth map size does not match the image");
    }
    return d;
  });
  return s;
}

Frame Pipeline::step(SessionState& session, const TrajectoryEntry& entry) const {
  return step_with_pose(session, entry, entry.to_pose());
}

Frame Pipeline::step(SessionState& session, const CameraPose& pose,
                     const std::optional<std::string>& new_prompt, const StepOverrides& overrides) const {
  TrajectoryEntry entry = entry_from_pose(pose);
  entry.prompt = new_prompt;
  entry.overrides = overrides;
  return step_with_pose(session, entry, pose);
}

Frame Pipeline::step_with_pose(SessionState& s, const TrajectoryEntry& entry, const CameraPose& pose) const {
  pose.validate();
  const PipelineConfig cfg = apply_overrides(s.config, entry.overrides);
  const Denoiser& denoiser = *backends_.denoiser;
  denoiser.taps().validate_for(cfg.latent_shape);
  const std::vector<std::string> sites = resolve_injection_sites(cfg, denoiser.taps());
  const bool guide = cfg.lambda > 0.0;
  const std::string tap = guide ? resolve_feature_tap(denoiser, cfg.feature_tap) : std::string();
  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.total_steps, cfg.beta_start, cfg.beta_end);
  const StepPlan plan = make_step_plan(cfg.total_steps, cfg.ddim_steps, cfg.t1, cfg.t2);
  const int frame_index = s.frame_index + 1;

  Frame frame;
  frame.index = frame_index;
  frame.pose = pose;
  Timings& timings = frame.timing_ms;

  struct Texts {
    TextEmbedding uncond;
    TextEmbedding next;
    std::string next_prompt;
  };
  const Texts texts = run_stage("text", timings, [&] {
    Texts t{backends_.text_encoder->encode(cfg.negative_prompt), s.text, s.prompt};
    if (entry.prompt) {
      t.next = backends_.text_encoder->encode(*entry.prompt);
      t.next_prompt = *entry.prompt;
    }
    return t;
  });

  // (1) current view: encode and invert to t1, then on to t2.
  const Grid x0 = run_stage("encode", timings, [&] {
    Grid x = backends_.autoencoder->encode(s.current_image);
    if (x.shape() != cfg.latent_shape) {
      throw std::runtime_error("encoded latent " + x.shape().to_string() + " differs from configured " +
                               cfg.latent_shape.to_string());
    }
    return x;
  });
  const std::vector<Grid> path = run_stage("invert", timings, [&] {
    const EpsFunction eps = [&](const Grid& x, int t) {
      return predict_eps(denoiser, x, t, s.text, texts.uncond, cfg.inversion_guidance_scale);
    };
    return ddim_invert_to(x0, plan, plan.t2_index, eps, sched, cfg.inversion_refinement);
  });

  // (2) high-pass latent warp at t1.
  const LatentWarp warped = run_stage("warp", timings, [&] {
    const Shape& ls = cfg.latent_shape;
    const CameraIntrinsics k_image =
        CameraIntrinsics::from_fov(s.current_image.width(), s.current_image.height(), cfg.horizontal_fov_deg);
    const CameraIntrinsics k_latent = rescale_intrinsics(k_image, ls.width, ls.height);
    const DepthMap depth = downsample_depth(s.current_depth, ls.height, ls.width);
    return warp_latent_highpass(path[static_cast<std::size_t>(plan.t1_index)], depth, k_latent, pose, cfg.sigma);
  });
  frame.hole_fraction = warped.warp.hole_fraction();

  // (3) lift the warped latent from t1 to t2.
  Grid x_next = run_stage("lift", timings, [&] {
    if (cfg.stochastic_lift) {
      const Grid noise = normal_grid(cfg.latent_shape, hash_key({cfg.seed, static_cast<std::uint64_t>(frame_index), kLiftNoise}));
      return ddpm_forward(warped.latent, plan.t1(), plan.t2(), noise, sched);
    }
    const EpsFunction eps = [&](const Grid& x, int t) {
      return predict_eps(denoiser, x, t, texts.next, texts.uncond, cfg.inversion_guidance_scale);
    };
    Grid x = warped.latent;
    for (int i = plan.t1_index; i < plan.t2_index; ++i) {
      x = ddim_invert_refined(x, plan.timesteps[static_cast<std::size_t>(i)],
                              plan.timesteps[static_cast<std::size_t>(i) + 1], eps, sched, cfg.inversion_refinement);
    }
    return x;
  });

  // (4) lockstep denoising of both views from t2 down.
  x_next = run_stage("denoise", timings, [&] {
    const bool need_current = guide || !sites.empty();
    Grid x_cur = path[static_cast<std::size_t>(plan.t2_index)];
    Grid x = x_next;
    for (int i = plan.t2_index; i >= 0; --i) {
      const int t = plan.timesteps[static_cast<std::size_t>(i)];
      const int t_prev = plan.previous(i);
      const bool inject = !sites.empty() && t >= cfg.injection_t_min && t <= cfg.injection_t_max;

      std::shared_ptr<const InjectionPlan> injection;
      Grid f_warped;
      Mask valid;
      if (need_current) {
        DenoiserRequest req;
        req.latent = x_cur;
        req.timestep = t;
        req.text = s.text;
        req.uncond = texts.uncond;
        req.guidance_scale = cfg.inversion_guidance_scale;
        if (inject) req.capture.insert(sites.begin(), sites.end());
        if (guide) req.capture.insert(tap);
        DenoiserResponse resp = run_denoiser(denoiser, req);
        if (inject) {
          auto p = std::make_shared<InjectionPlan>();
          for (const auto& site : sites) p->sites[site] = warp_kv(resp.captured_kv.at(site), warped.warp);
          injection = std::move(p);
        }
        if (guide) {
          const Grid& f = resp.captured_features.at(tap);
          f_warped = warp_with_result(f, warped.warp);
          valid = valid_mask_at(warped.warp, f.width(), f.height());
        }
        x_cur = ddim_step(x_cur, resp.eps, t, t_prev, sched);
      }

      Grid eps = predict_eps(denoiser, x, t, texts.next, texts.uncond, cfg.guidance_scale, injection);
      if (guide && valid.count() > 0) {
        GuidanceContext ctx;
        ctx.text = texts.next;
        ctx.injection = injection;
        ctx.feature_tap = tap;
        ctx.fd_directions = cfg.fd_directions;
        ctx.fd_seed = hash_key({cfg.seed, static_cast<std::uint64_t>(frame_index), static_cast<std::uint64_t>(i), kProbeNoise});
        try {
          const Grid grad = similarity_gradient(denoiser, x, t, ctx, f_warped, valid);
          eps = guided_epsilon(eps, grad, cfg.lambda, sched[t_prev]);
        } catch (const DegenerateInput&) {
          // Every valid location has a zero feature vector: nothing to align this step.
        }
      }
      x = ddim_step(x, eps, t, t_prev, sched);
    }
    return x;
  });
  if (!all_finite(x_next)) throw StageError("denoise", "non-finite values in the next-view latent");

  // (5) decode, re-estimate depth, commit.
  frame.image = run_stage("decode", timings, [&] { return quantize_8bit(backends_.autoencoder->decode(x_next)); });
  DepthMap depth = run_stage("depth", timings, [&] {
    DepthMap d = backends_.depth_estimator->estimate(frame.image);
    d.validate();
    if (d.width != frame.image.width() || d.height != frame.image.height()) {
      throw std::runtime_error("depth map size does not match the image");
    }
    return d;
  });
  frame.latent = std::move(x_next);
  frame.prompt = texts.next_prompt;
  frame.embedding_id = texts.next.id;

  LogEntry log;
  log.frame_index = frame_index;
  log.entry = entry;
  log.pose = pose;
  log.prompt = texts.next_prompt;
  log.embedding_id = texts.next.id;
  log.hole_fraction = frame.hole_fraction;

  s.frame_index = frame_index;
  s.current_image = frame.image;
  s.current_depth = std::move(depth);
  s.prompt = texts.next_prompt;
  s.text = texts.next;
  s.log.push_back(std::move(log));
  return frame;
}

TrajectoryRun Pipeline::run_trajectory(SessionState& session, const std::vector<TrajectoryEntry>& trajectory) const {
  if (trajectory.empty()) throw std::invalid_argument("run_trajectory: empty trajectory");
  TrajectoryRun run;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    try {
      run.frames.push_back(step(session, trajectory[i]));
    } catch (const StageError& e) {
      run.failure = TrajectoryFailure{static_cast<int>(i), e.stage(), e.what()};
      break;
    } catch (const std::exception& e) {
      run.failure = TrajectoryFailure{static_cast<int>(i), "input", e.what()};
      break;
    }
  }
  return run;
}

}  // namespace latentwarp
