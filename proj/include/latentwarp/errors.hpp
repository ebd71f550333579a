#pragma once

#include <stdexcept>
#include <string>

namespace latentwarp {

// Argument and shape violations use std::invalid_argument directly.

/// Missing model artifacts, unknown tap ids, malformed adapter files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs that are well-formed but leave an operation undefined
/// (e.g. a similarity loss with no valid locations).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline failure tagged with the stage it happened in.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace latentwarp
