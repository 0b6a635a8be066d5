#include "marl_dyn/config.hpp"
#include "marl_dyn/io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <stdexcept>
#include <string>

using namespace marl_dyn;
namespace fs = std::filesystem;

namespace {

// game and agents are required keys; fill them in when a case does not care
Json with_required(Json doc) {
  if (!doc.contains("game")) doc["game"] = "prisoners_dilemma";
  if (!doc.contains("agents")) doc["agents"] = Json::parse(R"([{"type": "tabular_q"}, {"type": "tabular_q"}])");
  return doc;
}

RunConfig parse(const std::string& text) { return config_from_json(with_required(Json::parse(text))); }

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults resolve and round-trip") {
  const RunConfig c = parse(R"({"game": "matching_pennies"})");
  CHECK(c.sim.game.name == "matching_pennies");
  CHECK(c.sim.n_burn < c.sim.n_steps);
  const RunConfig again = config_from_json(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
  CHECK(config_hash(again) == config_hash(c));

  RunConfig other = c;
  other.sim.seed += 1;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("config errors name the offending key") {
  const std::string burn = error_of(R"({"n_steps": 1000, "n_burn": 1000})");
  CHECK(burn.find("n_burn") != std::string::npos);

  const std::string gamma = error_of(R"({"agents": [{"type": "tabular_q", "gamma": 1.2}, {"type": "tabular_q"}]})");
  CHECK(gamma.find("agents.0.gamma") != std::string::npos);
  CHECK(gamma.find("1.2") != std::string::npos);

  CHECK(error_of(R"({"agents": [{"type": "tabular_q"}, {"type": "tabular_q", "learning_rat": 0.1}]})").find("agents.1.learning_rat") != std::string::npos);
  CHECK(error_of(R"({"n_steps": "many"})").find("n_steps") != std::string::npos);
  CHECK(error_of(R"({"game": "go"})").find("game") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 99})").find("schema_version") != std::string::npos);
  CHECK(error_of(R"({"game": "custom"})").find("payoffs") != std::string::npos);
  CHECK(error_of(R"({"agents": [{"type": "tabular_q", "hidden": [4]}, {"type": "tabular_q"}]})").find("hidden") != std::string::npos);
  CHECK_FALSE(error_of(R"({"projection": "action_prob", "agents": [{"type": "idqn"}, {"type": "idqn"}]})").empty());
}

TEST_CASE("save and reload is byte-identical") {
  const fs::path dir = testutil::scratch_dir("config_roundtrip");
  RunConfig c = parse(R"({"game": "chicken", "seed": 17, "n_runs": 3,
      "agents": [{"type": "idqn", "hidden": [16]}, {"type": "reinforce", "baseline": "running_mean"}],
      "sweep": {"key": "agents.*.gamma", "values": [0.5, 0.9]}})");
  save_config(dir / "a.json", c);
  const RunConfig loaded = load_config(dir / "a.json");
  save_config(dir / "b.json", loaded);
  CHECK(testutil::slurp(dir / "a.json") == testutil::slurp(dir / "b.json"));
  CHECK(loaded.sim.config_hash == config_hash(c));
  REQUIRE(loaded.sweep.has_value());
  CHECK(loaded.sweep->values.size() == 2);

  testutil::spit(dir / "bad.json", "{ not json");
  CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("dotted-path patching") {
  Json doc = config_to_json(RunConfig{});
  patch_json(doc, "agents.*.gamma", 0.5);
  CHECK(doc["agents"][0]["gamma"] == 0.5);
  CHECK(doc["agents"][1]["gamma"] == 0.5);
  patch_json(doc, "agents.1.exploration.eps_end", 0.0);
  CHECK(doc["agents"][1]["exploration"]["eps_end"] == 0.0);
  CHECK(read_json_path(doc, "agents.*.gamma") == 0.5);
  CHECK_THROWS_AS(patch_json(doc, "agents.*.nope", 1.0), ConfigError);
  CHECK_THROWS_AS(patch_json(doc, "agents", 1.0), ConfigError);
  CHECK_THROWS_AS(patch_json(doc, "agents.5.gamma", 1.0), ConfigError);
}

TEST_CASE("atomic write leaves the target untouched when interrupted") {
  const fs::path dir = testutil::scratch_dir("atomic");
  const fs::path target = dir / "out.txt";
  atomic_write_text(target, "first\n");
  CHECK_THROWS_AS(atomic_write(target,
                               [](std::ostream& out) {
                                 out << "partial";
                                 throw std::runtime_error("crash mid-write");
                               }),
                  std::runtime_error);
  CHECK(testutil::slurp(target) == "first\n");
  Index files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("trace files round-trip and carry their config") {
  const fs::path dir = testutil::scratch_dir("traces");
  RunConfig c = parse(
      R"({"game": "stag_hunt", "n_steps": 500, "n_burn": 100, "n_runs": 2, "projection": "action_prob"})");
  c.sim.config_hash = config_hash(c);
  const auto traces = run_ensemble(c.sim, 1);
  for (const auto& t : traces) write_trace(dir, t, config_to_json(c));
  CHECK(fs::exists(dir / "run_000.csv"));
  CHECK(fs::exists(dir / "run_001.json"));

  const TraceSet set = read_trace_dir(dir);
  REQUIRE(set.traces.size() == 2);
  CHECK(set.config_hash == c.sim.config_hash);
  CHECK(config_from_json(set.config).sim.game.name == "stag_hunt");
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(set.traces[i].joint == traces[i].joint);
    CHECK(set.traces[i].steps == traces[i].steps);
    CHECK(set.traces[i].meta.seed == traces[i].meta.seed);
    CHECK(set.traces[i].agent_dims == traces[i].agent_dims);
  }

  const CsvTable table = read_csv(dir / "run_000.csv");
  CHECK(table.column("h") == 1);
  CHECK_THROWS_AS(table.column("theta_9"), ConfigError);

  // a trace from another config is refused unless forced
  RunConfig other = c;
  other.sim.seed = 99;
  other.sim.config_hash = config_hash(other);
  TrajectoryTrace foreign = run_training(other.sim, 0);
  foreign.meta.run_index = 2;
  write_trace(dir, foreign, config_to_json(other));
  CHECK_THROWS_AS(read_trace_dir(dir), ConfigError);
  CHECK(read_trace_dir(dir, true).traces.size() == 3);

  CHECK_THROWS_AS(read_trace_dir(testutil::scratch_dir("empty_traces")), ConfigError);
}

TEST_CASE("report files") {
  const fs::path dir = testutil::scratch_dir("report");
  RunConfig c = parse(
      R"({"game": "matching_pennies", "n_steps": 3000, "n_burn": 500, "n_runs": 2, "projection": "action_prob"})");
  const auto traces = run_ensemble(c.sim, 1);
  const DiagnosticsReport r = diagnose(traces, c.diagnostics, c.sim.n_burn, c.sim.record_stride);
  write_report_files(dir / "report.json", r, "abc123");

  const Json j = Json::parse(testutil::slurp(dir / "report.json"));
  for (const char* key : {"frobenius", "lambda_max", "d2", "recurrence_rate"}) CHECK(j.at(key).is_number());
  CHECK(j.at("config_hash") == "abc123");

  const CsvTable density = read_csv(dir / "density.csv");
  CHECK(density.values.rows() == 400);
  CHECK(testutil::slurp(dir / "lyapunov_curve.csv").rfind("# config_hash abc123", 0) == 0);
  CHECK(fs::exists(dir / "correlation_curve.csv"));

  const PgmImage img = read_pgm(dir / "recurrence.pgm");
  REQUIRE(r.recurrence.has_value());
  CHECK(img.width == r.recurrence->size());
  CHECK(img.height == r.recurrence->size());
  CHECK(img.pixels[0] == 128);  // diagonal sits in the mask band
  for (Index i = 0; i < img.height; ++i)
    for (Index j = 0; j < img.width; ++j) {
      const auto px = img.pixels[static_cast<std::size_t>(i * img.width + j)];
      if (r.recurrence->masked(i, j))
        CHECK(px == 128);
      else
        CHECK(px == (r.recurrence->r(i, j) ? 255 : 0));
    }
}
