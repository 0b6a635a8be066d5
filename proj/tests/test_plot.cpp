#include "marl_dyn/config.hpp"
#include "marl_dyn/io.hpp"
#include "marl_dyn/plot.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <regex>

using namespace marl_dyn;
namespace fs = std::filesystem;

namespace {

Index count_of(const std::string& text, const std::string& needle) {
  Index n = 0;
  for (auto at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1)) ++n;
  return n;
}

std::string attr(const std::string& svg, const std::string& cls, const std::string& name) {
  const std::regex re("class=\"" + cls + "\"[^>]*?" + name + "=\"([^\"]*)\"");
  std::smatch m;
  return std::regex_search(svg, m, re) ? m[1].str() : std::string{};
}

}  // namespace

TEST_CASE("plot kinds parse") {
  CHECK(parse_plot_kind("density") == PlotKind::density);
  CHECK(to_string(PlotKind::sensitivity) == "sensitivity");
  CHECK_THROWS_AS(parse_plot_kind("pie"), ConfigError);
}

TEST_CASE("phase portrait is deterministic and marks start and end") {
  const fs::path dir = testutil::scratch_dir("plot_phase");
  testutil::spit(dir / "run_000.csv", "run_index,h,theta_0,theta_1\n0,10,0.1,0.2\n0,20,0.4,0.5\n0,30,0.9,0.8\n");
  testutil::spit(dir / "field.csv", "x,y,dx,dy\n0,0,0,0\n1,0,0.1,0\n0,1,0,0.1\n1,1,0,0\n");
  PlotSpec spec;
  spec.inputs = {dir / "run_000.csv"};
  spec.field = dir / "field.csv";
  spec.output = dir / "a.svg";
  render_plot(spec);
  spec.output = dir / "b.svg";
  render_plot(spec);
  const std::string svg = testutil::slurp(dir / "a.svg");
  CHECK(svg == testutil::slurp(dir / "b.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(count_of(svg, "class=\"start\"") == 1);
  CHECK(count_of(svg, "class=\"end\"") == 1);
  CHECK(count_of(svg, "stroke=\"#999\"") == 2);  // two non-zero field arrows
  CHECK(svg.find("<!-- config_hash unknown -->") != std::string::npos);
}

TEST_CASE("single-point trace draws coincident start and end markers") {
  const fs::path dir = testutil::scratch_dir("plot_single");
  testutil::spit(dir / "one.csv", "theta_0,theta_1\n0.3,0.7\n");
  PlotSpec spec;
  spec.inputs = {dir / "one.csv"};
  spec.output = dir / "one.svg";
  render_plot(spec);
  const std::string svg = testutil::slurp(spec.output);
  const std::string cx = attr(svg, "start", "cx");
  const std::string cy = attr(svg, "start", "cy");
  REQUIRE_FALSE(cx.empty());
  const std::string star = attr(svg, "end", "points");
  REQUIRE_FALSE(star.empty());
  // the star's first vertex sits straight above the centre
  const auto comma = star.find(',');
  CHECK(star.substr(0, comma) == cx);
  CHECK(std::stod(star.substr(comma + 1)) < std::stod(cy));
}

TEST_CASE("unusable input fails without leaving a file behind") {
  const fs::path dir = testutil::scratch_dir("plot_empty");
  testutil::spit(dir / "empty.csv", "");
  testutil::spit(dir / "header_only.csv", "theta_0,theta_1\n");
  for (const char* name : {"empty.csv", "header_only.csv", "missing.csv"}) {
    PlotSpec spec;
    spec.inputs = {dir / name};
    spec.output = dir / "out.svg";
    CHECK_THROWS_AS(render_plot(spec), ConfigError);
  }
  PlotSpec wrong_col;
  testutil::spit(dir / "cols.csv", "a,b\n1,2\n");
  wrong_col.inputs = {dir / "cols.csv"};
  wrong_col.output = dir / "out.svg";
  CHECK_THROWS_AS(render_plot(wrong_col), ConfigError);

  Index files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".svg" ? 1 : 0;
  CHECK(files == 0);
}

TEST_CASE("every report artifact renders") {
  const fs::path dir = testutil::scratch_dir("plot_artifacts");
  RunConfig c = config_from_json(Json::parse(
      R"({"game": "matching_pennies", "n_steps": 3000, "n_burn": 500, "n_runs": 1, "projection": "action_prob",
      "agents": [{"type": "tabular_q"}, {"type": "tabular_q"}]})"));
  const auto traces = run_ensemble(c.sim, 1);
  const DiagnosticsReport r = diagnose(traces, c.diagnostics, c.sim.n_burn, c.sim.record_stride);
  write_report_files(dir / "report.json", r, "h");
  testutil::spit(dir / "sensitivity.csv",
                 "value,lambda_mean,lambda_sd,d2_mean,d2_sd,frob_mean,frob_sd,n_diverged,status\n"
                 "0.5,0.01,0.002,1.1,0.1,2,0.5,0,ok\n0.9,,,,,,,4,failed\n0.99,0.0,0.001,0.9,0.2,1.5,0.3,0,ok\n");

  const std::vector<std::pair<PlotKind, const char*>> jobs{{PlotKind::density, "density.csv"},
                                                           {PlotKind::recurrence, "recurrence.pgm"},
                                                           {PlotKind::divergence_curve, "lyapunov_curve.csv"},
                                                           {PlotKind::correlation_curve, "correlation_curve.csv"},
                                                           {PlotKind::sensitivity, "sensitivity.csv"}};
  for (const auto& [kind, input] : jobs) {
    PlotSpec spec;
    spec.kind = kind;
    spec.inputs = {dir / input};
    spec.output = dir / (to_string(kind) + ".svg");
    render_plot(spec);
    const std::string svg = testutil::slurp(spec.output);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg == render_svg(spec));
    if (kind != PlotKind::sensitivity) CHECK(svg.find("<!-- config_hash h -->") != std::string::npos);
  }
  CHECK(testutil::slurp(dir / "sensitivity.svg").find("failed") != std::string::npos);

  PlotSpec copy;
  copy.kind = PlotKind::recurrence;
  copy.inputs = {dir / "recurrence.pgm"};
  copy.output = dir / "copy.pgm";
  render_plot(copy);
  CHECK(testutil::slurp(copy.output) == testutil::slurp(dir / "recurrence.pgm"));
}
