#pragma once

#include "marl_dyn/config.hpp"
#include "marl_dyn/diagnostics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace marl_dyn {

struct SweepConfig {
  RunConfig base;
  std::string key;  // dotted path, "*" matches every array element
  std::vector<double> values;
  std::filesystem::path out_dir;  // empty: nothing written

  void validate() const;
};

/// Uses the config's own "sweep" block.
SweepConfig make_sweep_config(const RunConfig& config, std::filesystem::path out_dir = {});

struct SweepPoint {
  double value = 0.0;
  bool failed = false;
  std::string failure;
  std::string config_hash;
  std::uint64_t seed = 0;
  Index n_runs = 0;
  Index n_diverged = 0;
  ScalarStats lambda_max;
  ScalarStats d2;
  ScalarStats frobenius;
};

struct SweepResult {
  std::string key;
  std::string base_config_hash;
  std::vector<SweepPoint> points;  // sorted by value
};

/// Resolved config of one grid point. The seed is derived from the base seed and the grid
/// value, so adding or reordering values leaves other points unchanged.
RunConfig sweep_point_config(const SweepConfig& config, double value);

SweepResult run_sweep(const SweepConfig& config);

/// "# config_hash <base>" then
/// value,lambda_mean,lambda_sd,d2_mean,d2_sd,frob_mean,frob_sd,n_diverged,status
std::string emit_sensitivity_curves(const SweepResult& result);

nlohmann::json sweep_to_json(const SweepResult& result);

}  // namespace marl_dyn
