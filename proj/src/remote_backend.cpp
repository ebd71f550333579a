#include "latentwarp/remote_backend.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "httplib.h"
#include "json.hpp"
#include "latentwarp/errors.hpp"
#include "latentwarp/image_io.hpp"

namespace latentwarp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("adapter config: '" + key + "' expects a number, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != static_cast<int>(d)) throw ConfigError("adapter config: '" + key + "' expects an integer");
  return static_cast<int>(d);
}

json tensor_json(const Grid& g) {
  return {{"shape", {g.channels(), g.height(), g.width()}},
          {"dtype", "float32"},
          {"data", base64_encode(pack_float32(g))}};
}

Grid tensor_from_json(const json& j) {
  const auto& s = j.at("shape");
  if (s.size() != 3 || j.value("dtype", "float32") != "float32") {
    throw std::runtime_error("model worker: expected a float32 CHW tensor");
  }
  return unpack_float32(base64_decode(j.at("data").get<std::string>()),
                        Shape{s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
}

json tokens_json(const TokenMatrix& m) {
  Grid g(1, static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) g(0, static_cast<int>(r), static_cast<int>(c)) = m(r, c);
  return tensor_json(g);
}

TokenMatrix tokens_from_json(const json& j) {
  const Grid g = tensor_from_json(j);
  TokenMatrix m(g.height(), g.width());
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) m(r, c) = g(0, r, c);
  return m;
}

json embedding_json(const TextEmbedding& e) {
  Grid values(1, 1, static_cast<int>(e.values.size()));
  values.data() = e.values;
  return {{"id", e.id}, {"prompt", e.prompt}, {"values", tensor_json(values)}};
}

class WorkerClient {
 public:
  explicit WorkerClient(const AdapterConfig& c) : url_(c.worker_url), timeout_(c.timeout_seconds) {}

  json call(const std::string& endpoint, const json& body) const {
    httplib::Client client(url_);
    const auto secs = static_cast<time_t>(timeout_);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    auto res = client.Post(endpoint, body.dump(), "application/json");
    if (!res) {
      throw std::runtime_error("model worker " + url_ + endpoint + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw std::runtime_error("model worker " + endpoint + " returned " + std::to_string(res->status) +
                               ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("model worker " + endpoint + ": malformed reply: " + e.what());
    }
  }

 private:
  std::string url_;
  double timeout_;
};

json request_json(const DenoiserRequest& r) {
  json j = {{"latent", tensor_json(r.latent)},
            {"timestep", r.timestep},
            {"text", embedding_json(r.text)},
            {"uncond", embedding_json(r.uncond)},
            {"guidance_scale", r.guidance_scale},
            {"capture", json(std::vector<std::string>(r.capture.begin(), r.capture.end()))}};
  json injection = json::object();
  if (r.injection) {
    for (const auto& [site, kv] : r.injection->sites) {
      injection[site] = {{"height", kv.height}, {"width", kv.width}, {"k", tokens_json(kv.k)}, {"v", tokens_json(kv.v)}};
    }
  }
  j["injection"] = injection;
  return j;
}

class RemoteDenoiser final : public Denoiser {
 public:
  explicit RemoteDenoiser(const AdapterConfig& c) : client_(c), analytic_(c.analytic_gradients) {
    taps_.attention_sites = c.attention_sites;
    taps_.feature_sites = {c.feature_site};
    taps_.default_feature_site = c.feature_site.id;
  }

  const TapRegistry& taps() const override { return taps_; }
  GradientMode gradient_mode() const override {
    return analytic_ ? GradientMode::analytic : GradientMode::finite_difference;
  }

  DenoiserResponse predict(const DenoiserRequest& r) const override {
    const json reply = client_.call("/denoise", request_json(r));
    DenoiserResponse out;
    out.eps = tensor_from_json(reply.at("eps"));
    const json kvs = reply.value("kv", json::object());
    for (const auto& [site, kv] : kvs.items()) {
      AttentionTensors t;
      t.site_id = site;
      t.height = kv.at("height").get<int>();
      t.width = kv.at("width").get<int>();
      t.q = tokens_from_json(kv.at("q"));
      t.k = tokens_from_json(kv.at("k"));
      t.v = tokens_from_json(kv.at("v"));
      t.validate();
      out.captured_kv[site] = std::move(t);
    }
    const json features = reply.value("features", json::object());
    for (const auto& [site, f] : features.items()) {
      out.captured_features[site] = tensor_from_json(f);
    }
    return out;
  }

  Grid feature_vjp(const DenoiserRequest& r, const std::string& tap, const Grid& cotangent) const override {
    if (!analytic_) return Denoiser::feature_vjp(r, tap, cotangent);
    json body = request_json(r);
    body["tap"] = tap;
    body["cotangent"] = tensor_json(cotangent);
    return tensor_from_json(client_.call("/feature_vjp", body).at("grad"));
  }

 private:
  WorkerClient client_;
  bool analytic_;
  TapRegistry taps_;
};

class RemoteAutoencoder final : public Autoencoder {
 public:
  explicit RemoteAutoencoder(const AdapterConfig& c)
      : client_(c), factor_(c.spatial_factor), channels_(c.latent_channels) {}

  Grid encode(const Image& image) const override {
    return tensor_from_json(client_.call("/encode", {{"image", tensor_json(image)}}).at("latent"));
  }
  Image decode(const Grid& latent) const override {
    return tensor_from_json(client_.call("/decode", {{"latent", tensor_json(latent)}}).at("image"));
  }
  int spatial_factor() const override { return factor_; }
  int latent_channels() const override { return channels_; }

 private:
  WorkerClient client_;
  int factor_;
  int channels_;
};

class RemoteDepth final : public DepthEstimator {
 public:
  explicit RemoteDepth(const AdapterConfig& c) : client_(c), conversion_(c.disparity) {}

  DepthMap estimate(const Image& image) const override {
    const Grid disparity = tensor_from_json(client_.call("/depth", {{"image", tensor_json(image)}}).at("disparity"));
    if (disparity.channels() != 1 || disparity.height() != image.height() || disparity.width() != image.width()) {
      throw std::runtime_error("model worker: disparity " + disparity.shape().to_string() +
                               " does not match image " + image.shape().to_string());
    }
    return disparity_to_depth(disparity.data(), disparity.width(), disparity.height(), conversion_);
  }

 private:
  WorkerClient client_;
  DisparityConversion conversion_;
};

class RemoteText final : public TextEncoder {
 public:
  explicit RemoteText(const AdapterConfig& c) : client_(c) {}

  TextEmbedding encode(const std::string& prompt) const override {
    const json reply = client_.call("/text", {{"prompt", prompt}});
    TextEmbedding e;
    e.id = reply.at("id").get<std::uint64_t>();
    e.prompt = prompt;
    e.values = tensor_from_json(reply.at("values")).data();
    return e;
  }

 private:
  WorkerClient client_;
};

}  // namespace

AdapterConfig parse_adapter_config(std::string_view text, const fs::path& base_dir) {
  AdapterConfig c;
  bool has_feature_site = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto resolve = [&](const std::string& v) {
    const fs::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("adapter config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key == "worker_url") {
      c.worker_url = value;
    } else if (key == "unet_path") {
      c.unet_path = resolve(value);
    } else if (key == "vae_path") {
      c.vae_path = resolve(value);
    } else if (key == "text_encoder_path") {
      c.text_encoder_path = resolve(value);
    } else if (key == "depth_model_path") {
      c.depth_model_path = resolve(value);
    } else if (key == "attention_sites") {
      c.attention_sites.clear();
      for (const auto& item : split(value, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 2 || parts[0].empty()) {
          throw ConfigError("adapter config: attention site '" + item + "' must be id:downsample");
        }
        c.attention_sites.push_back({parts[0], parse_int(key, parts[1])});
      }
    } else if (key == "feature_site") {
      const auto parts = split(value, ':');
      if (parts.size() != 3 || parts[0].empty()) {
        throw ConfigError("adapter config: feature_site must be id:downsample:channels");
      }
      c.feature_site = {parts[0], parse_int(key, parts[1]), parse_int(key, parts[2])};
      has_feature_site = true;
    } else if (key == "spatial_factor") {
      c.spatial_factor = parse_int(key, value);
    } else if (key == "latent_channels") {
      c.latent_channels = parse_int(key, value);
    } else if (key == "disparity_scale") {
      c.disparity.scale = parse_double(key, value);
    } else if (key == "disparity_offset") {
      c.disparity.offset = parse_double(key, value);
    } else if (key == "depth_min") {
      c.disparity.min_depth = parse_double(key, value);
    } else if (key == "depth_max") {
      c.disparity.max_depth = parse_double(key, value);
    } else if (key == "guidance_scale") {
      c.guidance_scale = parse_double(key, value);
    } else if (key == "analytic_gradients") {
      if (value != "true" && value != "false") throw ConfigError("adapter config: analytic_gradients must be true or false");
      c.analytic_gradients = value == "true";
    } else if (key == "timeout_seconds") {
      c.timeout_seconds = parse_double(key, value);
    } else {
      throw ConfigError("adapter config: unknown key '" + key + "'");
    }
  }

  if (c.worker_url.empty()) throw ConfigError("adapter config: 'worker_url' is required");
  const std::pair<const char*, const fs::path*> artifacts[] = {
      {"unet_path", &c.unet_path},
      {"vae_path", &c.vae_path},
      {"text_encoder_path", &c.text_encoder_path},
      {"depth_model_path", &c.depth_model_path},
  };
  for (const auto& [key, path] : artifacts) {
    if (path->empty()) throw ConfigError(std::string("adapter config: '") + key + "' is required");
    if (!fs::exists(*path)) {
      throw ConfigError(std::string("adapter config: missing model artifact ") + key + " = '" + path->string() + "'");
    }
  }
  if (c.attention_sites.empty()) throw ConfigError("adapter config: 'attention_sites' is required");
  if (!has_feature_site) throw ConfigError("adapter config: 'feature_site' is required");
  if (c.spatial_factor < 1 || c.latent_channels < 1) {
    throw ConfigError("adapter config: spatial_factor and latent_channels must be positive");
  }
  if (!(c.disparity.min_depth > 0.0 && c.disparity.min_depth <= c.disparity.max_depth)) {
    throw ConfigError("adapter config: need 0 < depth_min <= depth_max");
  }
  if (!(c.timeout_seconds > 0.0)) throw ConfigError("adapter config: timeout_seconds must be positive");
  return c;
}

AdapterConfig load_adapter_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("adapter config file not found: '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_adapter_config(ss.str(), path.parent_path());
}

std::optional<fs::path> adapter_config_path_from_env() {
  const char* v = std::getenv(kAdapterConfigEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

BackendSuite make_pretrained_suite(const AdapterConfig& config) {
  try {
    WorkerClient(config).call("/load", {{"unet_path", config.unet_path.string()},
                                        {"vae_path", config.vae_path.string()},
                                        {"text_encoder_path", config.text_encoder_path.string()},
                                        {"depth_model_path", config.depth_model_path.string()}});
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("pretrained backends unavailable: ") + e.what());
  }
  BackendSuite suite;
  suite.name = "pretrained";
  suite.denoiser = std::make_shared<RemoteDenoiser>(config);
  suite.autoencoder = std::make_shared<RemoteAutoencoder>(config);
  suite.depth_estimator = std::make_shared<RemoteDepth>(config);
  suite.text_encoder = std::make_shared<RemoteText>(config);
  return suite;
}

}  // namespace latentwarp
