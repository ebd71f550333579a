// latentwarp command line: batch generation, HTTP service, replay checks and metrics.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latentwarp/errors.hpp"
#include "latentwarp/image_io.hpp"
#include "latentwarp/metrics.hpp"
#include "latentwarp/mock_backends.hpp"
#include "latentwarp/pipeline.hpp"
#include "latentwarp/remote_backend.hpp"
#include "latentwarp/serialization.hpp"
#include "latentwarp/service.hpp"
#include "latentwarp/session_store.hpp"

namespace fs = std::filesystem;
using namespace latentwarp;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

struct BackendFlags {
  std::string backend = "mock";
  std::string mock_denoiser = "attention";
  std::string adapter_config;
};

struct ConfigFlags {
  std::optional<int> t1, t2, latent_size;
  std::optional<std::string> sigma;
  std::optional<double> lambda, guidance_scale;
  std::optional<std::uint64_t> seed;
  std::string lift = "ddpm";
  bool no_injection = false;
  std::string config_file;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_option("--backend", f.backend, "Model backends")->check(CLI::IsMember({"mock", "pretrained"}));
  cmd->add_option("--mock-denoiser", f.mock_denoiser, "Mock denoiser variant")
      ->check(CLI::IsMember({"attention", "linear"}));
  cmd->add_option("--adapter-config", f.adapter_config,
                  std::string("Pretrained adapter config (default: $") + kAdapterConfigEnv + ")");
}

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--t1", f.t1, "Warp timestep");
  cmd->add_option("--t2", f.t2, "Denoising start timestep");
  cmd->add_option("--sigma", f.sigma, "High-pass threshold in frequency bins ('inf' disables the split)");
  cmd->add_option("--lambda", f.lambda, "Feature-correspondence guidance weight");
  cmd->add_option("--guidance-scale", f.guidance_scale, "Classifier-free guidance for the next view");
  cmd->add_option("--seed", f.seed, "Session seed");
  cmd->add_option("--latent-size", f.latent_size, "Mock latent height and width")->check(CLI::Range(2, 512));
  cmd->add_option("--lift", f.lift, "t1 -> t2 transition: ddpm noise or deterministic ddim inversion")
      ->check(CLI::IsMember({"ddpm", "ddim"}));
  cmd->add_flag("--no-injection", f.no_injection, "Disable cross-view K/V injection");
  cmd->add_option("--config", f.config_file, "JSON file of pipeline config overrides")->check(CLI::ExistingFile);
}

BackendSuite make_backends(const BackendFlags& f, std::optional<AdapterConfig>& adapter) {
  if (f.backend == "pretrained") {
    std::optional<fs::path> path;
    if (!f.adapter_config.empty()) path = f.adapter_config;
    if (!path) path = adapter_config_path_from_env();
    if (!path) {
      throw ConfigError(std::string("pretrained backend needs --adapter-config or $") + kAdapterConfigEnv);
    }
    adapter = load_adapter_config(*path);
    return make_pretrained_suite(*adapter);
  }
  MockSuiteOptions o;
  o.denoiser = f.mock_denoiser == "linear" ? MockDenoiserKind::linear : MockDenoiserKind::attention;
  return make_mock_suite(o);
}

BackendFlags backend_flags_for_record(const SessionStore& store, BackendFlags f) {
  if (store.backend_name() == "mock-linear") {
    f.backend = "mock";
    f.mock_denoiser = "linear";
  } else if (store.backend_name() == "mock-attention") {
    f.backend = "mock";
    f.mock_denoiser = "attention";
  } else if (store.backend_name() == "pretrained") {
    f.backend = "pretrained";
  }
  return f;
}

PipelineConfig build_config(const ConfigFlags& f, const std::optional<AdapterConfig>& adapter) {
  PipelineConfig c;
  if (adapter) c.guidance_scale = adapter->guidance_scale;
  if (!f.config_file.empty()) {
    const auto bytes = read_file_bytes(f.config_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("--config: " + std::string(e.what()));
    }
    c = apply_config_json(c, j);
  }
  if (f.t1) c.t1 = *f.t1;
  if (f.t2) c.t2 = *f.t2;
  if (f.sigma) {
    try {
      c.sigma = std::stod(*f.sigma);
    } catch (const std::exception&) {
      throw std::invalid_argument("--sigma expects a number or 'inf'");
    }
  }
  if (f.lambda) c.lambda = *f.lambda;
  if (f.guidance_scale) c.guidance_scale = *f.guidance_scale;
  if (f.seed) c.seed = *f.seed;
  if (f.latent_size) c.latent_shape = Shape{c.latent_shape.channels, *f.latent_size, *f.latent_size};
  c.stochastic_lift = f.lift == "ddpm";
  if (f.no_injection) c.injection_sites = std::vector<std::string>{};
  c.validate();
  return c;
}

// Removes the files a previous generate run leaves in `out`.
void clear_previous_run(const fs::path& out) {
  for (const char* name : {"config.json", "trajectory.json", "metrics.json", "metrics.txt"}) fs::remove(out / name);
  for (const char* sub : {"frames", "latents"}) {
    if (!fs::exists(out / sub)) continue;
    for (const auto& e : fs::directory_iterator(out / sub)) {
      if (e.path().filename().string().rfind("frame_", 0) == 0) fs::remove(e.path());
    }
  }
}

struct GenerateFlags {
  std::string prompt;
  std::string image;
  std::string trajectory;
  std::optional<int> frames;
  double step_size = 0.5;
  std::string out;
  bool metrics = false;
  bool dump_latents = false;
  bool overwrite = false;
};

int run_generate(const GenerateFlags& g, const BackendFlags& bf, const ConfigFlags& cf) {
  if (g.prompt.empty() && g.image.empty()) throw CLI::ValidationError("generate", "--prompt or --image is required");
  if (g.frames && *g.frames < 1) throw CLI::ValidationError("--frames", "must be at least 1");

  std::vector<TrajectoryEntry> trajectory;
  if (!g.trajectory.empty()) {
    trajectory = load_trajectory(g.trajectory);
    if (trajectory.empty()) throw std::invalid_argument("trajectory file has no entries");
    if (g.frames) {
      if (static_cast<std::size_t>(*g.frames) > trajectory.size()) {
        throw std::invalid_argument("--frames " + std::to_string(*g.frames) + " exceeds the " +
                                    std::to_string(trajectory.size()) + " trajectory entries");
      }
      trajectory.resize(static_cast<std::size_t>(*g.frames));
    }
  } else {
    trajectory.assign(static_cast<std::size_t>(g.frames.value_or(8)), forward_entry(g.step_size));
  }

  std::optional<AdapterConfig> adapter;
  const Pipeline pipeline(make_backends(bf, adapter));
  PipelineConfig config = build_config(cf, adapter);

  SessionStart start;
  start.prompt = g.prompt;
  if (!g.image.empty()) {
    start.image = read_png(g.image);
    const int f = pipeline.backends().autoencoder->spatial_factor();
    if (start.image->height() % f != 0 || start.image->width() % f != 0) {
      throw std::invalid_argument("image size must be a multiple of the autoencoder factor " + std::to_string(f));
    }
    config.latent_shape = Shape{pipeline.backends().autoencoder->latent_channels(), start.image->height() / f,
                                start.image->width() / f};
  }

  const fs::path out(g.out);
  if (g.overwrite) clear_previous_run(out);
  SessionState session = pipeline.init_session(start, config);
  const SessionStore store = SessionStore::create(out, config, start, pipeline.backends().name);
  store.write_frame(0, session.current_image);
  if (g.dump_latents) store.write_latent(0, pipeline.backends().autoencoder->encode(session.current_image));
  std::vector<Image> frames{session.current_image};

  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    Frame frame;
    try {
      frame = pipeline.step(session, trajectory[i]);
    } catch (const StageError& e) {
      std::cerr << "error: frame " << i + 1 << ": " << e.what() << "\n";
      return kExitBackend;
    }
    store.write_frame(frame.index, frame.image);
    if (g.dump_latents) store.write_latent(frame.index, frame.latent);
    store.write_log(session.log);
    frames.push_back(frame.image);
    double total = 0.0;
    for (const auto& [stage, ms] : frame.timing_ms) total += ms;
    std::fprintf(stderr, "frame %d: holes %.3f, %.0f ms\n", frame.index, frame.hole_fraction, total);
  }

  if (g.metrics) {
    const SequenceReport report = sequence_consistency(frames);
    const std::string json_text = to_json(report).dump(2) + "\n";
    write_file_bytes(out / "metrics.json", std::vector<std::uint8_t>(json_text.begin(), json_text.end()));
    const std::string table = report.to_text();
    write_file_bytes(out / "metrics.txt", std::vector<std::uint8_t>(table.begin(), table.end()));
    std::cout << table;
  }
  return 0;
}

int run_serve(const std::string& host, int port, const std::string& data_dir, const BackendFlags& bf,
              const ConfigFlags& cf) {
  std::optional<AdapterConfig> adapter;
  BackendSuite suite = make_backends(bf, adapter);
  ServiceOptions options;
  options.base_config = build_config(cf, adapter);
  if (!data_dir.empty()) options.data_dir = fs::path(data_dir);
  SessionService service(std::move(suite), options);
  HttpServer server(service);
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  server.listen();
  return 0;
}

int run_replay(const std::string& dir, const BackendFlags& flags) {
  const SessionStore store = SessionStore::open(dir);
  std::optional<AdapterConfig> adapter;
  const Pipeline pipeline(make_backends(backend_flags_for_record(store, flags), adapter));
  const ReplayReport report = replay_session(pipeline, dir);
  std::cout << "compared " << report.frames_compared << " frames";
  if (!report.mismatched.empty()) {
    std::cout << ", mismatched:";
    for (int i : report.mismatched) std::cout << " " << i;
  }
  std::cout << "\n";
  if (report.failure) {
    std::cerr << "error: entry " << report.failure->entry_index << ": " << report.failure->message << "\n";
    return kExitBackend;
  }
  return report.identical() ? 0 : kExitFailure;
}

int run_metrics(std::vector<std::string> inputs, bool as_json) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.path().extension() == ".png") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  std::vector<Image> frames;
  for (const auto& f : files) frames.push_back(read_png(f));
  const SequenceReport report = sequence_consistency(frames);
  std::cout << (as_json ? to_json(report).dump(2) + "\n" : report.to_text());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perpetual view generation by warping diffusion latents"};
  app.require_subcommand(1);

  BackendFlags backend_flags;
  ConfigFlags config_flags;

  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "Fly a camera trajectory and write the frames");
  auto* start_group = generate->add_option_group("start");
  start_group->add_option("--prompt", gen.prompt, "Text prompt (generates frame 0 unless --image is given)");
  start_group->add_option("--image", gen.image, "Starting RGB PNG")->check(CLI::ExistingFile);
  generate->add_option("--trajectory", gen.trajectory, "Trajectory JSON file")->check(CLI::ExistingFile);
  generate->add_option("--frames", gen.frames, "Number of frames to generate after frame 0");
  generate->add_option("--step-size", gen.step_size, "Forward distance per frame without --trajectory");
  generate->add_option("--out", gen.out, "Output session directory")->required();
  generate->add_flag("--metrics", gen.metrics, "Write adjacent-frame PSNR/SSIM report");
  generate->add_flag("--dump-latents", gen.dump_latents, "Write float32 latent dumps");
  generate->add_flag("--overwrite", gen.overwrite, "Replace a previous run in --out");
  add_backend_flags(generate, backend_flags);
  add_config_flags(generate, config_flags);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", data_dir, "Persist session records here");
  add_backend_flags(serve, backend_flags);
  add_config_flags(serve, config_flags);

  std::string replay_dir;
  auto* replay = app.add_subcommand("replay", "Re-run a stored session and compare frames byte for byte");
  replay->add_option("session", replay_dir, "Session directory")->required()->check(CLI::ExistingDirectory);
  add_backend_flags(replay, backend_flags);

  std::vector<std::string> metric_inputs;
  bool metrics_json = false;
  auto* metrics = app.add_subcommand("metrics", "Adjacent-frame PSNR/SSIM of an image sequence");
  metrics->add_option("inputs", metric_inputs, "PNG files or directories (sorted by name)")->required();
  metrics->add_flag("--json", metrics_json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) return run_generate(gen, backend_flags, config_flags);
    if (*serve) return run_serve(host, port, data_dir, backend_flags, config_flags);
    if (*replay) return run_replay(replay_dir, backend_flags);
    if (*metrics) return run_metrics(metric_inputs, metrics_json);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
