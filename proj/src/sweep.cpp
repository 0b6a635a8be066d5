#include "marl_dyn/sweep.hpp"

#include "marl_dyn/io.hpp"
#include "marl_dyn/rng.hpp"

#include <algorithm>
#include <bit>
#include <fmt/format.h>
#include <set>

namespace marl_dyn {

void SweepConfig::validate() const {
  if (values.empty()) throw ConfigError("sweep.values: must be non-empty");
  if (std::set<double>(values.begin(), values.end()).size() != values.size())
    throw ConfigError("sweep.values: duplicate grid value");
  Json probe = config_to_json(base);
  probe.erase("sweep");
  patch_json(probe, key, Json(values.front()));
}

SweepConfig make_sweep_config(const RunConfig& config, std::filesystem::path out_dir) {
  if (!config.sweep) throw ConfigError("sweep: config has no sweep block");
  SweepConfig s;
  s.base = config;
  s.base.sweep.reset();
  s.key = config.sweep->key;
  s.values = config.sweep->values;
  s.out_dir = std::move(out_dir);
  s.validate();
  return s;
}

RunConfig sweep_point_config(const SweepConfig& config, double value) {
  Json doc = config_to_json(config.base);
  doc.erase("sweep");
  // integer-typed fields keep their type
  const Json current = read_json_path(doc, config.key);
  Json v = current.is_number_integer() ? Json(static_cast<std::int64_t>(value)) : Json(value);
  if (current.is_number_unsigned()) v = Json(static_cast<std::uint64_t>(value));
  patch_json(doc, config.key, v);
  RunConfig point = config_from_json(doc);
  point.sim.seed = derive_seed(config.base.sim.seed, {std::bit_cast<std::uint64_t>(value)});
  point.sim.config_hash = config_hash(point);
  return point;
}

namespace {

SweepPoint evaluate(const SweepConfig& config, double value, Index grid_index) {
  SweepPoint p;
  p.value = value;
  const RunConfig rc = sweep_point_config(config, value);
  p.config_hash = rc.sim.config_hash;
  p.seed = rc.sim.seed;
  p.n_runs = rc.sim.n_runs;
  const auto traces = run_ensemble(rc.sim);
  for (const auto& t : traces) p.n_diverged += t.meta.diverged ? 1 : 0;

  std::filesystem::path dir;
  if (!config.out_dir.empty()) {
    dir = config.out_dir / fmt::format("point_{:03d}", grid_index);
    const Json cfg = config_to_json(rc);
    for (const auto& t : traces) write_trace(dir, t, cfg);
  }
  try {
    const DiagnosticsReport report = diagnose(traces, rc.diagnostics, rc.sim.n_burn, rc.sim.record_stride);
    p.lambda_max = report.lambda_max;
    p.d2 = report.d2;
    p.frobenius = report.frobenius;
    if (!dir.empty()) write_report_files(dir / "report.json", report, p.config_hash);
  } catch (const DivergenceError& e) {
    p.failed = true;
    p.failure = e.what();
  }
  return p;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config) {
  config.validate();
  SweepResult result;
  result.key = config.key;
  result.base_config_hash = config_hash(config.base);
  // ensembles parallelize internally, so grid points run one after another
  for (std::size_t i = 0; i < config.values.size(); ++i)
    result.points.push_back(evaluate(config, config.values[i], static_cast<Index>(i)));
  std::stable_sort(result.points.begin(), result.points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) { return a.value < b.value; });
  if (!config.out_dir.empty()) {
    atomic_write_text(config.out_dir / "sensitivity.csv", emit_sensitivity_curves(result));
    atomic_write_text(config.out_dir / "sweep_report.json", sweep_to_json(result).dump(2) + "\n");
  }
  return result;
}

std::string emit_sensitivity_curves(const SweepResult& result) {
  std::vector<const SweepPoint*> order;
  for (const auto& p : result.points) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->value < b->value; });

  auto pair = [](const ScalarStats& s) {
    return s.available() ? fmt::format("{},{}", s.mean, s.sd) : std::string(",");
  };
  std::string out;
  if (!result.base_config_hash.empty()) out = fmt::format("# config_hash {}\n", result.base_config_hash);
  out += "value,lambda_mean,lambda_sd,d2_mean,d2_sd,frob_mean,frob_sd,n_diverged,status\n";
  for (const auto* p : order) {
    if (p->failed) {
      fmt::format_to(std::back_inserter(out), "{},,,,,,,{},failed\n", p->value, p->n_diverged);
    } else {
      fmt::format_to(std::back_inserter(out), "{},{},{},{},{},ok\n", p->value, pair(p->lambda_max), pair(p->d2),
                     pair(p->frobenius), p->n_diverged);
    }
  }
  return out;
}

Json sweep_to_json(const SweepResult& result) {
  Json j;
  j["key"] = result.key;
  j["base_config_hash"] = result.base_config_hash;
  j["points"] = Json::array();
  auto stats = [](const ScalarStats& s) {
    Json o;
    o["values"] = s.values;
    o["mean"] = s.available() ? Json(s.mean) : Json(nullptr);
    o["sd"] = s.available() ? Json(s.sd) : Json(nullptr);
    return o;
  };
  for (const auto& p : result.points) {
    Json o;
    o["value"] = p.value;
    o["status"] = p.failed ? "failed" : "ok";
    if (p.failed) o["failure"] = p.failure;
    o["config_hash"] = p.config_hash;
    o["seed"] = p.seed;
    o["n_runs"] = p.n_runs;
    o["n_diverged"] = p.n_diverged;
    o["lambda_max"] = stats(p.lambda_max);
    o["d2"] = stats(p.d2);
    o["frobenius"] = stats(p.frobenius);
    j["points"].push_back(std::move(o));
  }
  return j;
}

}  // namespace marl_dyn
