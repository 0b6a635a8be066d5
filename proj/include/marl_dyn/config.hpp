#pragma once

#include "marl_dyn/coupled_sim.hpp"
#include "marl_dyn/diagnostics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace marl_dyn {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// One-dimensional hyperparameter sweep: `key` is a dotted path into the run config
/// ("agents.*.gamma" patches every agent).
struct SweepSpec {
  std::string key;
  std::vector<double> values;
};

/// On-disk run configuration: simulation, diagnostics and an optional sweep.
struct RunConfig {
  int schema_version = kSchemaVersion;
  SimConfig sim;
  DiagnosticsSettings diagnostics;
  std::optional<SweepSpec> sweep;
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise ConfigError naming
/// the key path. Missing keys take defaults.
RunConfig config_from_json(const Json& doc);

/// Fully resolved document (every default written out). nlohmann's object ordering is
/// alphabetical, so dumps are canonical.
Json config_to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// 16 hex digits of FNV-1a over the canonical dump.
std::string config_hash(const RunConfig& config);

/// Sets every scalar addressed by a dotted path ("a.b.0.c", "*" matches all array items).
/// Throws ConfigError when the path does not resolve to existing scalar fields.
void patch_json(Json& doc, const std::string& dotted_key, const Json& value);

/// Reads the scalar at a dotted path (first match for wildcards).
Json read_json_path(const Json& doc, const std::string& dotted_key);

}  // namespace marl_dyn
