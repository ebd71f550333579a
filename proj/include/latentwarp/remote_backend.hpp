#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentwarp/backends.hpp"

namespace latentwarp {

inline constexpr const char* kAdapterConfigEnv = "LATENTWARP_ADAPTER_CONFIG";

/// Settings for the pretrained backends. The models run in a separate
/// worker process reached over HTTP; this side validates the artifact
/// paths, publishes the tap registry and converts disparity to depth.
///
/// File format: one `key = value` per line, `#` starts a comment.
struct AdapterConfig {
  std::string worker_url;
  std::filesystem::path unet_path;
  std::filesystem::path vae_path;
  std::filesystem::path text_encoder_path;
  std::filesystem::path depth_model_path;

  std::vector<AttentionSite> attention_sites;  // "id:downsample, ..."
  FeatureSite feature_site;                    // "id:downsample:channels"
  int spatial_factor = 8;
  int latent_channels = 4;
  DisparityConversion disparity;
  double guidance_scale = 7.5;
  bool analytic_gradients = false;
  double timeout_seconds = 600.0;
};

/// Parses config text; relative artifact paths resolve against `base_dir`.
/// Every artifact path must exist; ConfigError names the first missing one.
AdapterConfig parse_adapter_config(std::string_view text, const std::filesystem::path& base_dir);
AdapterConfig load_adapter_config(const std::filesystem::path& path);

/// The config path named by LATENTWARP_ADAPTER_CONFIG, if set.
std::optional<std::filesystem::path> adapter_config_path_from_env();

/// Backends proxied to the model worker. Fails with ConfigError when the
/// worker is unreachable or refuses to load the artifacts.
BackendSuite make_pretrained_suite(const AdapterConfig& config);

}  // namespace latentwarp
