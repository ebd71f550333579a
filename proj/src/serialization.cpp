#include "latentwarp/serialization.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace latentwarp {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

double read_number(const json& j, const std::string& key) {
  require(j.is_number(), "'" + key + "' must be a number");
  return j.get<double>();
}

int read_int(const json& j, const std::string& key) {
  require(j.is_number_integer(), "'" + key + "' must be an integer");
  return j.get<int>();
}

// null and "inf" both denote an unbounded sigma.
double read_sigma(const json& j) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "inf")) {
    return std::numeric_limits<double>::infinity();
  }
  const double v = read_number(j, "sigma");
  require(v >= 0.0, "'sigma' must be >= 0");
  return v;
}

json write_sigma(double sigma) {
  if (std::isinf(sigma)) return "inf";
  return sigma;
}

template <std::size_t N>
std::array<double, N> read_array(const json& j, const std::string& key) {
  require(j.is_array() && j.size() == N, "'" + key + "' must be an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = read_number(j[i], key);
  return out;
}

// Fields the session log adds to each entry; ignored when the log is replayed.
const std::set<std::string> kLogOnlyKeys = {"frame_index", "embedding_id", "hole_fraction",
                                            "pose", "prompt_in_effect"};

}  // namespace

json to_json(const StepOverrides& o) {
  json j = json::object();
  if (o.sigma) j["sigma"] = write_sigma(*o.sigma);
  if (o.lambda) j["lambda"] = *o.lambda;
  if (o.guidance_scale) j["guidance_scale"] = *o.guidance_scale;
  if (o.t1) j["t1"] = *o.t1;
  if (o.t2) j["t2"] = *o.t2;
  return j;
}

StepOverrides step_overrides_from_json(const json& j) {
  require(j.is_object(), "'config' must be an object");
  StepOverrides o;
  for (const auto& [key, value] : j.items()) {
    if (key == "sigma") {
      o.sigma = read_sigma(value);
    } else if (key == "lambda") {
      o.lambda = read_number(value, key);
    } else if (key == "guidance_scale") {
      o.guidance_scale = read_number(value, key);
    } else if (key == "t1") {
      o.t1 = read_int(value, key);
    } else if (key == "t2") {
      o.t2 = read_int(value, key);
    } else {
      throw std::invalid_argument("unknown step override '" + key + "'");
    }
  }
  return o;
}

json to_json(const TrajectoryEntry& e) {
  json j = json::object();
  if (e.rotation) j["rotation"] = *e.rotation;
  if (e.euler) j["euler"] = *e.euler;
  j["translation"] = e.translation;
  if (e.prompt) j["prompt"] = *e.prompt;
  if (!e.overrides.empty()) j["config"] = to_json(e.overrides);
  return j;
}

TrajectoryEntry trajectory_entry_from_json(const json& j) {
  require(j.is_object(), "entry must be a JSON object");
  TrajectoryEntry e;
  for (const auto& [key, value] : j.items()) {
    if (key == "rotation") {
      e.rotation = read_array<9>(value, key);
    } else if (key == "euler") {
      e.euler = read_array<3>(value, key);
    } else if (key == "translation") {
      e.translation = read_array<3>(value, key);
    } else if (key == "prompt") {
      if (value.is_null()) continue;
      require(value.is_string(), "'prompt' must be a string");
      e.prompt = value.get<std::string>();
    } else if (key == "config") {
      e.overrides = step_overrides_from_json(value);
    } else if (!kLogOnlyKeys.count(key)) {
      throw std::invalid_argument("unknown key '" + key + "'");
    }
  }
  require(j.contains("translation"), "'translation' is required");
  e.validate();
  return e;
}

json to_json(const PipelineConfig& c) {
  json j = {
      {"total_steps", c.total_steps},
      {"t1", c.t1},
      {"t2", c.t2},
      {"sigma", write_sigma(c.sigma)},
      {"lambda", c.lambda},
      {"ddim_steps", c.ddim_steps},
      {"schedule", c.schedule == ScheduleKind::linear ? "linear" : "scaled_linear"},
      {"beta_start", c.beta_start},
      {"beta_end", c.beta_end},
      {"guidance_scale", c.guidance_scale},
      {"inversion_guidance_scale", c.inversion_guidance_scale},
      {"negative_prompt", c.negative_prompt},
      {"feature_tap", c.feature_tap},
      {"injection_t_min", c.injection_t_min},
      {"injection_t_max", c.injection_t_max},
      {"stochastic_lift", c.stochastic_lift},
      {"inversion_refinement", c.inversion_refinement},
      {"seed", c.seed},
      {"latent_shape", {c.latent_shape.channels, c.latent_shape.height, c.latent_shape.width}},
      {"horizontal_fov_deg", c.horizontal_fov_deg},
      {"fd_directions", c.fd_directions},
  };
  j["injection_sites"] = c.injection_sites ? json(*c.injection_sites) : json(nullptr);
  return j;
}

PipelineConfig apply_config_json(PipelineConfig c, const json& j) {
  require(j.is_object(), "config overrides must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "total_steps") {
      c.total_steps = read_int(v, key);
    } else if (key == "t1") {
      c.t1 = read_int(v, key);
    } else if (key == "t2") {
      c.t2 = read_int(v, key);
    } else if (key == "sigma") {
      c.sigma = read_sigma(v);
    } else if (key == "lambda") {
      c.lambda = read_number(v, key);
    } else if (key == "ddim_steps") {
      c.ddim_steps = read_int(v, key);
    } else if (key == "schedule") {
      require(v == "linear" || v == "scaled_linear", "'schedule' must be 'linear' or 'scaled_linear'");
      c.schedule = v == "linear" ? ScheduleKind::linear : ScheduleKind::scaled_linear;
    } else if (key == "beta_start") {
      c.beta_start = read_number(v, key);
    } else if (key == "beta_end") {
      c.beta_end = read_number(v, key);
    } else if (key == "guidance_scale") {
      c.guidance_scale = read_number(v, key);
    } else if (key == "inversion_guidance_scale") {
      c.inversion_guidance_scale = read_number(v, key);
    } else if (key == "negative_prompt") {
      require(v.is_string(), "'negative_prompt' must be a string");
      c.negative_prompt = v.get<std::string>();
    } else if (key == "feature_tap") {
      require(v.is_string(), "'feature_tap' must be a string");
      c.feature_tap = v.get<std::string>();
    } else if (key == "injection_sites") {
      if (v.is_null()) {
        c.injection_sites.reset();
      } else {
        require(v.is_array(), "'injection_sites' must be null or an array of strings");
        std::vector<std::string> sites;
        for (const auto& s : v) {
          require(s.is_string(), "'injection_sites' must be null or an array of strings");
          sites.push_back(s.get<std::string>());
        }
        c.injection_sites = std::move(sites);
      }
    } else if (key == "injection_t_min") {
      c.injection_t_min = read_int(v, key);
    } else if (key == "injection_t_max") {
      c.injection_t_max = read_int(v, key);
    } else if (key == "stochastic_lift") {
      require(v.is_boolean(), "'stochastic_lift' must be a boolean");
      c.stochastic_lift = v.get<bool>();
    } else if (key == "inversion_refinement") {
      c.inversion_refinement = read_int(v, key);
    } else if (key == "seed") {
      require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0),
              "'seed' must be a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "latent_shape") {
      require(v.is_array() && v.size() == 3, "'latent_shape' must be [channels, height, width]");
      c.latent_shape = Shape{read_int(v[0], key), read_int(v[1], key), read_int(v[2], key)};
    } else if (key == "horizontal_fov_deg") {
      c.horizontal_fov_deg = read_number(v, key);
    } else if (key == "fd_directions") {
      c.fd_directions = read_int(v, key);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

json to_json(const CameraPose& pose) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(pose.rotation(i, k));
  return {{"rotation", r}, {"translation", {pose.translation[0], pose.translation[1], pose.translation[2]}}};
}

json to_json(const LogEntry& e) {
  json j = to_json(e.entry);
  j["frame_index"] = e.frame_index;
  j["pose"] = to_json(e.pose);
  j["prompt_in_effect"] = e.prompt;
  j["embedding_id"] = e.embedding_id;
  j["hole_fraction"] = e.hole_fraction;
  return j;
}

json log_to_json(const std::vector<LogEntry>& log) {
  json j = json::array();
  for (const auto& e : log) j.push_back(to_json(e));
  return j;
}

json to_json(const SequenceReport& r) {
  return {{"frame_count", r.frame_count}, {"psnr_db", r.psnr},       {"ssim", r.ssim},
          {"mean_psnr_db", r.mean_psnr},  {"mean_ssim", r.mean_ssim}};
}

}  // namespace latentwarp
