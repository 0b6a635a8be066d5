#include "marl_dyn/config.hpp"
#include "marl_dyn/coupled_sim.hpp"
#include "marl_dyn/diagnostics.hpp"
#include "marl_dyn/io.hpp"
#include "marl_dyn/plot.hpp"
#include "marl_dyn/replicator.hpp"
#include "marl_dyn/sweep.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace marl_dyn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void log(const std::string& msg) { std::fprintf(stderr, "marl-dyn: %s\n", msg.c_str()); }

RunConfig load_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  RunConfig c = load_config(path);
  if (seed) {
    c.sim.seed = *seed;
    c.sim.config_hash = config_hash(c);
  }
  return c;
}

int cmd_describe(const std::string& config_path, const std::optional<std::uint64_t>& seed) {
  const RunConfig c = load_with_seed(config_path, seed);
  std::cout << config_to_json(c).dump(2) << "\n";
  std::cout << "config_hash " << c.sim.config_hash << "\n";
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, const fs::path& out, const std::optional<std::uint64_t>& seed) {
  const RunConfig c = load_with_seed(config_path, seed);
  const Json cfg = config_to_json(c);
  log(fmt::format("simulating {} runs of {} steps on {} (hash {})", c.sim.n_runs, c.sim.n_steps, c.sim.game.name,
                  c.sim.config_hash));
  const auto traces = run_ensemble(c.sim);
  Index diverged = 0;
  for (const auto& t : traces) {
    write_trace(out, t, cfg);
    if (t.meta.diverged) {
      ++diverged;
      log(fmt::format("run {} diverged: {}", t.meta.run_index, t.meta.divergence_message));
    }
  }
  save_config(out / "config.json", c);
  log(fmt::format("wrote {} traces to {}", traces.size(), out.string()));
  if (diverged == static_cast<Index>(traces.size())) {
    log("every run diverged");
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_diagnose(const fs::path& traces, fs::path out, const std::string& config_path, bool force) {
  const TraceSet set = read_trace_dir(traces, force);
  RunConfig c = config_from_json(set.config);
  if (!config_path.empty()) c.diagnostics = load_config(config_path).diagnostics;
  if (out.empty()) out = traces / "report.json";
  const DiagnosticsReport report = diagnose(set.traces, c.diagnostics, c.sim.n_burn, c.sim.record_stride);
  write_report_files(out, report, set.config_hash);
  for (const auto& e : report.errors) log(e);
  std::cout << report_to_json(report, set.config_hash).dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const fs::path& out, const std::optional<std::uint64_t>& seed) {
  const RunConfig c = load_with_seed(config_path, seed);
  const SweepConfig sc = make_sweep_config(c, out);
  log(fmt::format("sweeping {} over {} values", sc.key, sc.values.size()));
  const SweepResult result = run_sweep(sc);
  std::cout << emit_sensitivity_curves(result);
  return kExitOk;
}

int cmd_replicator(const std::string& game_name, const std::string& config_path, const fs::path& out, Index resolution) {
  MatrixGame game;
  std::string csv;
  if (!config_path.empty()) {
    const RunConfig c = load_config(config_path);
    csv = fmt::format("# config_hash {}\n", c.sim.config_hash);
    const Game g = make_game(c.sim.game);
    if (!std::holds_alternative<MatrixGame>(g)) throw ConfigError("replicator: config game must be a 2x2 matrix game");
    game = std::get<MatrixGame>(g);
  } else {
    game = make_matrix_game(game_name);
    csv = fmt::format("# game {}\n", game.name);
  }
  const auto field = vector_field<double>(game, resolution);
  csv += "x,y,dx,dy\n";
  for (const auto& s : field.samples)
    csv += fmt::format("{},{},{},{}\n", s.x, s.y, s.dx, s.dy);
  atomic_write_text(out, csv);
  return kExitOk;
}

std::optional<AxisRange> parse_range(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError(fmt::format("range '{}' must be lo,hi", s));
  try {
    return AxisRange{std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("range '{}' must be lo,hi", s));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled MARL learning dynamics: simulation, diagnostics and plots"};
  app.require_subcommand(1);

  std::string config_path;
  fs::path out;
  std::optional<std::uint64_t> seed;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "run config JSON");
    if (config_required) opt->required();
    sub->add_option("--seed", seed, "override the base seed");
  };

  auto* describe = app.add_subcommand("describe", "print the resolved config");
  common(describe, true);

  auto* simulate = app.add_subcommand("simulate", "run an ensemble and write traces");
  common(simulate, true);
  simulate->add_option("--out", out, "trace directory")->required();

  fs::path traces_dir;
  bool force = false;
  auto* diag = app.add_subcommand("diagnose", "estimate stability diagnostics from a trace directory");
  common(diag, false);
  diag->add_option("--traces", traces_dir, "trace directory")->required();
  diag->add_option("--out", out, "report JSON; other artifacts go beside it (default: <traces>/report.json)");
  diag->add_flag("--force", force, "accept traces from different configs");

  auto* sweep = app.add_subcommand("sweep", "run a one-parameter sensitivity sweep");
  common(sweep, true);
  sweep->add_option("--out", out, "output directory")->required();

  std::string game_name;
  Index resolution = 21;
  auto* repl = app.add_subcommand("replicator", "write the replicator vector field of a 2x2 game");
  common(repl, false);
  repl->add_option("--game", game_name, "matrix game name");
  repl->add_option("--resolution", resolution, "grid points per axis")->check(CLI::Range(2, 1000));
  repl->add_option("--out", out, "field CSV (x,y,dx,dy)")->required();

  std::string kind, x_col = "theta_0", y_col = "theta_1", x_range, y_range;
  std::vector<fs::path> inputs;
  fs::path field;
  auto* plot = app.add_subcommand("plot", "render an SVG (or pass a recurrence PGM through)");
  common(plot, false);
  plot->add_option("--kind", kind, "phase_portrait|density|recurrence|sensitivity|divergence_curve|correlation_curve")
      ->required();
  plot->add_option("--in", inputs, "input file(s)")->required();
  plot->add_option("--field", field, "replicator field CSV for phase portraits");
  plot->add_option("-x,--x-column", x_col, "x column for phase portraits");
  plot->add_option("-y,--y-column", y_col, "y column for phase portraits");
  plot->add_option("--x-range", x_range, "lo,hi");
  plot->add_option("--y-range", y_range, "lo,hi");
  plot->add_option("--out", out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*describe) return cmd_describe(config_path, seed);
    if (*simulate) return cmd_simulate(config_path, out, seed);
    if (*diag) return cmd_diagnose(traces_dir, out, config_path, force);
    if (*sweep) return cmd_sweep(config_path, out, seed);
    if (*repl) {
      if (game_name.empty() == config_path.empty()) throw ConfigError("replicator: give exactly one of --game or --config");
      return cmd_replicator(game_name, config_path, out, resolution);
    }
    if (*plot) {
      PlotSpec spec;
      spec.kind = parse_plot_kind(kind);
      spec.inputs = inputs;
      if (!field.empty()) spec.field = field;
      spec.x_column = x_col;
      spec.y_column = y_col;
      spec.x_range = parse_range(x_range);
      spec.y_range = parse_range(y_range);
      spec.output = out;
      render_plot(spec);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    log(fmt::format("error: {}", e.what()));
    return kExitUsage;
  } catch (const ContractViolation& e) {
    log(fmt::format("error: {}", e.what()));
    return kExitUsage;
  } catch (const DivergenceError& e) {
    log(fmt::format("runtime failure: {}", e.what()));
    return kExitRuntime;
  } catch (const std::exception& e) {
    log(fmt::format("runtime failure: {}", e.what()));
    return kExitRuntime;
  }
  return kExitUsage;
}
