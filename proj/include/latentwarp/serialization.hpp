#pragma once

#include "json.hpp"
#include "latentwarp/metrics.hpp"
#include "latentwarp/pipeline.hpp"
#include "latentwarp/trajectory.hpp"

namespace latentwarp {

// JSON forms shared by the CLI, the session store and the HTTP service.
// Infinite sigma is written as the string "inf"; null and "inf" both read back as infinity.

nlohmann::json to_json(const TrajectoryEntry& entry);
TrajectoryEntry trajectory_entry_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepOverrides& overrides);
StepOverrides step_overrides_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PipelineConfig& config);
/// Applies the keys present in `overrides` on top of `base`; unknown keys
/// and wrong types throw std::invalid_argument. The result is validated.
PipelineConfig apply_config_json(PipelineConfig base, const nlohmann::json& overrides);

nlohmann::json to_json(const CameraPose& pose);
nlohmann::json to_json(const LogEntry& entry);
nlohmann::json log_to_json(const std::vector<LogEntry>& log);

nlohmann::json to_json(const SequenceReport& report);

}  // namespace latentwarp
