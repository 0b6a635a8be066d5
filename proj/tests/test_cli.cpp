#include "marl_dyn/config.hpp"
#include "marl_dyn/io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

using namespace marl_dyn;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MARL_DYN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("simulate, diagnose and plot from the command line") {
  const fs::path dir = testutil::scratch_dir("cli");
  testutil::spit(dir / "cfg.json", R"({"game": "matching_pennies", "n_steps": 4000, "n_burn": 1000, "n_runs": 2,
      "seed": 3, "projection": "action_prob", "agents": [{"type": "tabular_q"}, {"type": "tabular_q"}]})");
  const std::string traces = (dir / "traces").string();

  REQUIRE(run_cli("simulate --config " + (dir / "cfg.json").string() + " --out " + traces) == 0);
  CHECK(fs::exists(dir / "traces" / "run_001.csv"));
  CHECK(fs::exists(dir / "traces" / "config.json"));

  const fs::path report = dir / "out" / "report.json";
  REQUIRE(run_cli("diagnose --traces " + traces + " --out " + report.string()) == 0);
  const Json j = Json::parse(testutil::slurp(report));
  for (const char* key : {"frobenius", "lambda_max", "d2", "recurrence_rate"}) CHECK(j.at(key).is_number());
  CHECK(j.at("recurrence_rate").get<double>() == doctest::Approx(0.08).epsilon(0.1));
  CHECK(fs::exists(dir / "out" / "recurrence.pgm"));
  CHECK(fs::exists(dir / "out" / "density.csv"));

  REQUIRE(run_cli("replicator --game matching_pennies --resolution 7 --out " + (dir / "field.csv").string()) == 0);
  CHECK(read_csv(dir / "field.csv").values.rows() == 49);

  const std::string phase = "plot --kind phase_portrait --in " + traces + "/run_000.csv -x theta_0 -y theta_1 --field " +
                            (dir / "field.csv").string() + " --out ";
  REQUIRE(run_cli(phase + (dir / "p1.svg").string()) == 0);
  REQUIRE(run_cli(phase + (dir / "p2.svg").string()) == 0);
  CHECK(testutil::slurp(dir / "p1.svg") == testutil::slurp(dir / "p2.svg"));
  const std::string hash = Json::parse(testutil::slurp(dir / "traces" / "run_000.json"))["config_hash"];
  CHECK(testutil::slurp(dir / "p1.svg").find("config_hash " + hash) != std::string::npos);
  CHECK(j.at("config_hash") == hash);
  CHECK(run_cli("plot --kind recurrence --in " + (dir / "out" / "recurrence.pgm").string() + " --out " +
                (dir / "rec.pgm").string()) == 0);
  CHECK(testutil::slurp(dir / "rec.pgm") == testutil::slurp(dir / "out" / "recurrence.pgm"));

  CHECK(run_cli("describe --config " + (dir / "cfg.json").string()) == 0);
}

TEST_CASE("usage and config errors exit with 1, runtime failures with 2") {
  const fs::path dir = testutil::scratch_dir("cli_errors");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("simulate --out " + dir.string()) == 1);
  CHECK(run_cli("simulate --config " + (dir / "nope.json").string() + " --out " + dir.string()) == 1);

  testutil::spit(dir / "bad.json", R"({"n_steps": 100, "n_burn": 500, "agents": [{"type": "tabular_q"}, {"type": "tabular_q"}]})");
  CHECK(run_cli("simulate --config " + (dir / "bad.json").string() + " --out " + (dir / "t").string()) == 1);

  testutil::spit(dir / "blowup.json", R"({"game": "prisoners_dilemma", "n_steps": 100, "n_burn": 10, "n_runs": 2,
      "agents": [{"type": "reinforce", "learning_rate": 1e7}, {"type": "reinforce", "learning_rate": 1e7}]})");
  CHECK(run_cli("simulate --config " + (dir / "blowup.json").string() + " --out " + (dir / "b").string()) == 2);

  testutil::spit(dir / "empty.csv", "");
  CHECK(run_cli("plot --kind density --in " + (dir / "empty.csv").string() + " --out " + (dir / "d.svg").string()) ==
        1);
  CHECK_FALSE(fs::exists(dir / "d.svg"));
}
