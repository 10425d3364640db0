#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driveflow/data.hpp"
#include "driveflow/evaluation.hpp"
#include "driveflow/models.hpp"
#include "driveflow/training.hpp"

namespace driveflow {

/// Everything a CLI run can be configured with.
struct RunConfig {
  std::uint64_t seed = 42;
  double fraction = 1.0;  // share of manifest records used (seeded subset)
  SceneParams scene;
  TrainConfig train;
  ModelSpec model;
  EvalConfig eval;
  double threshold_step = 0.5;
  double threshold_max = 15.0;

  /// Propagates shared values (seed, projection size, max speed, nvidia
  /// input shape, curve thresholds) into the nested structs.
  void resolve();
};

enum class ConfigType { real, size, integer, text, size_list, model_kind, backbone };

struct ConfigEntry {
  std::string key;  // "section.name"
  ConfigType type;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigEntry>& config_schema();

/// Throws ConfigError for unknown keys or values of the wrong type.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

/// Parses `[section]` headers and `key = value` lines; `#` and `;` start
/// comments. Returns fully qualified (key, value) pairs in file order.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   const std::string& source);
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Defaults, then the file (if any), then `overrides` in order.
RunConfig build_run_config(const std::filesystem::path& config_file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace driveflow
