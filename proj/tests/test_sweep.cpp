#include "marl_dyn/io.hpp"
#include "marl_dyn/sweep.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace marl_dyn;
namespace fs = std::filesystem;

namespace {

RunConfig small_base() {
  return config_from_json(Json::parse(R"({"game": "matching_pennies", "n_steps": 3000, "n_burn": 1000, "n_runs": 2,
      "seed": 5, "projection": "action_prob", "diagnostics": {"z_max": 10}, "agents": [{"type": "tabular_q"}, {"type": "tabular_q"}]})"));
}

SweepConfig gamma_sweep(std::vector<double> values, fs::path out = {}) {
  SweepConfig s;
  s.base = small_base();
  s.key = "agents.*.gamma";
  s.values = std::move(values);
  s.out_dir = std::move(out);
  return s;
}

}  // namespace

TEST_CASE("sweep validation") {
  CHECK_THROWS_AS(gamma_sweep({}).validate(), ConfigError);
  CHECK_THROWS_AS(gamma_sweep({0.5, 0.5}).validate(), ConfigError);
  SweepConfig bad = gamma_sweep({0.5});
  bad.key = "agents.*.gama";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(make_sweep_config(small_base()), ConfigError);
}

TEST_CASE("a point config patches the key and keeps integer fields integral") {
  const SweepConfig s = gamma_sweep({0.7});
  const RunConfig p = sweep_point_config(s, 0.7);
  CHECK(p.sim.agents[0].gamma == 0.7);
  CHECK(p.sim.agents[1].gamma == 0.7);
  CHECK(p.sim.seed != s.base.sim.seed);

  SweepConfig runs = s;
  runs.key = "n_runs";
  CHECK(config_to_json(sweep_point_config(runs, 3.0))["n_runs"].is_number_integer());
}

TEST_CASE("single-value sweep equals a direct run of the point config") {
  const SweepConfig s = gamma_sweep({0.8});
  const SweepResult r = run_sweep(s);
  REQUIRE(r.points.size() == 1);
  const RunConfig rc = sweep_point_config(s, 0.8);
  const auto traces = run_ensemble(rc.sim);
  const DiagnosticsReport direct = diagnose(traces, rc.diagnostics, rc.sim.n_burn, rc.sim.record_stride);
  CHECK(r.points[0].d2.values == direct.d2.values);
  CHECK(r.points[0].lambda_max.values == direct.lambda_max.values);
  CHECK(r.points[0].frobenius.values == direct.frobenius.values);
  CHECK(r.points[0].config_hash == rc.sim.config_hash);
}

TEST_CASE("grid order does not change any point") {
  const SweepResult a = run_sweep(gamma_sweep({0.5, 0.9}));
  const SweepResult b = run_sweep(gamma_sweep({0.9, 0.5, 0.7}));
  REQUIRE(b.points.size() == 3);
  CHECK(b.points[0].value == 0.5);
  CHECK(b.points[2].value == 0.9);
  CHECK(a.points[0].d2.values == b.points[0].d2.values);
  CHECK(a.points[1].d2.values == b.points[2].d2.values);
  CHECK(emit_sensitivity_curves(a) == emit_sensitivity_curves(run_sweep(gamma_sweep({0.9, 0.5}))));
}

TEST_CASE("sweep output directory layout") {
  const fs::path dir = testutil::scratch_dir("sweep");
  const SweepResult r = run_sweep(gamma_sweep({0.5, 0.9}, dir));
  CHECK(fs::exists(dir / "sensitivity.csv"));
  CHECK(fs::exists(dir / "sweep_report.json"));
  CHECK(fs::exists(dir / "point_000" / "run_000.csv"));
  CHECK(fs::exists(dir / "point_001" / "report.json"));
  const CsvTable t = read_csv(dir / "sensitivity.csv");
  CHECK(t.values.rows() == 2);
  CHECK(t.col("value")(1) == 0.9);
  CHECK(testutil::slurp(dir / "sensitivity.csv") == emit_sensitivity_curves(r));
  CHECK(testutil::slurp(dir / "sensitivity.csv").rfind("# config_hash " + config_hash(gamma_sweep({}).base), 0) == 0);
  const Json j = Json::parse(testutil::slurp(dir / "sweep_report.json"));
  CHECK(j["points"].size() == 2);
}

TEST_CASE("a fully diverged point is marked failed and the sweep continues") {
  SweepConfig s;
  s.base = config_from_json(Json::parse(R"({"game": "prisoners_dilemma", "n_steps": 2000, "n_burn": 500,
      "n_runs": 2, "projection": "action_prob", "diagnostics": {"z_max": 10},
      "agents": [{"type": "reinforce"}, {"type": "reinforce"}]})"));
  s.key = "agents.*.learning_rate";
  s.values = {0.01, 1e7};
  const SweepResult r = run_sweep(s);
  REQUIRE(r.points.size() == 2);
  CHECK_FALSE(r.points[0].failed);
  CHECK(r.points[1].failed);
  CHECK(r.points[1].n_diverged == 2);
  const std::string csv = emit_sensitivity_curves(r);
  CHECK(csv.find("10000000,,,,,,,2,failed") != std::string::npos);
}
