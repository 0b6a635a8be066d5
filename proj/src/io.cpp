#include "marl_dyn/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fmt/format.h>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

namespace marl_dyn {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static thread_local std::mt19937_64 salt{std::random_device{}()};
  const fs::path tmp = path.string() + fmt::format(".tmp.{}.{:x}", ::getpid(), salt());
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", tmp.string()));
      fill(out);
      out.flush();
      if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", tmp.string()));
    }
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

void atomic_write_text(const fs::path& path, std::string_view text) {
  atomic_write(path, [&](std::ostream& out) { out.write(text.data(), static_cast<std::streamsize>(text.size())); });
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string format_real(double v) { return fmt::format("{}", v); }

Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError(fmt::format("missing column '{}'", name));
  return static_cast<Index>(it - header.begin());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

// lines starting with '#' before the header are comments (config hash tags)
CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  CsvTable t;
  std::string line;
  bool got = false;
  while ((got = static_cast<bool>(std::getline(in, line))) && !line.empty() && line[0] == '#') {
  }
  if (!got || line.empty()) throw ConfigError(fmt::format("'{}' is empty", path.string()));
  t.header = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size())
      throw ConfigError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), lineno, t.header.size(),
                                    cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      if (c.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return t;
}

std::string trace_file_stem(Index run_index) { return fmt::format("run_{:03d}", run_index); }

namespace {

json layout_to_json(const AgentLayout& l) {
  return {{"kind", to_string(l.kind)},
          {"n_states", l.n_states},
          {"n_actions", l.n_actions},
          {"exploration", to_string(l.exploration)},
          {"temperature", l.temperature},
          {"layer_sizes", l.layer_sizes},
          {"projection_state", l.projection_state},
          {"parameter_count", l.parameter_count}};
}

AgentLayout layout_from_json(const json& j) {
  AgentLayout l;
  l.kind = parse_learner_kind(j.at("kind").get<std::string>());
  l.n_states = j.at("n_states").get<Index>();
  l.n_actions = j.at("n_actions").get<Index>();
  l.exploration = parse_exploration_mode(j.at("exploration").get<std::string>());
  l.temperature = j.at("temperature").get<double>();
  l.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
  l.projection_state = j.at("projection_state").get<Index>();
  l.parameter_count = j.at("parameter_count").get<Index>();
  return l;
}

}  // namespace

void write_trace(const fs::path& dir, const TrajectoryTrace& trace, const json& config) {
  const std::string stem = trace_file_stem(trace.meta.run_index);
  const Index dims = trace.joint.cols();
  atomic_write(dir / (stem + ".csv"), [&](std::ostream& out) {
    out << "run_index,h";
    for (Index c = 0; c < dims; ++c) out << ",theta_" << c;
    for (Index a = 0; a < trace.rewards.cols(); ++a) out << ",reward_" << a;
    out << '\n';
    std::string line;
    for (Index r = 0; r < trace.rows(); ++r) {
      line = fmt::format("{},{}", trace.meta.run_index, trace.steps[static_cast<std::size_t>(r)]);
      for (Index c = 0; c < dims; ++c) fmt::format_to(std::back_inserter(line), ",{}", trace.joint(r, c));
      for (Index a = 0; a < trace.rewards.cols(); ++a) fmt::format_to(std::back_inserter(line), ",{}", trace.rewards(r, a));
      line += '\n';
      out << line;
    }
  });
  json side;
  side["config_hash"] = trace.meta.config_hash;
  side["seed"] = trace.meta.seed;
  side["run_index"] = trace.meta.run_index;
  side["projection"] = to_string(trace.meta.projection);
  side["diverged"] = trace.meta.diverged;
  side["divergence_step"] = trace.meta.divergence_step;
  side["divergence_message"] = trace.meta.divergence_message;
  side["agent_dims"] = trace.agent_dims;
  side["n_reward_columns"] = trace.rewards.cols();
  side["layouts"] = json::array();
  for (const auto& l : trace.meta.layouts) side["layouts"].push_back(layout_to_json(l));
  side["config"] = config;
  atomic_write_text(dir / (stem + ".json"), side.dump(2) + "\n");
}

TraceSet read_trace_dir(const fs::path& dir, bool force) {
  if (!fs::is_directory(dir)) throw ConfigError(fmt::format("'{}' is not a directory", dir.string()));
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("run_", 0) == 0 && e.path().extension() == ".json") sidecars.push_back(e.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  if (sidecars.empty()) throw ConfigError(fmt::format("no run_NNN.json traces in '{}'", dir.string()));

  TraceSet set;
  for (const auto& side_path : sidecars) {
    std::ifstream in(side_path);
    json side;
    try {
      side = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(fmt::format("{}: invalid JSON: {}", side_path.string(), e.what()));
    }
    TrajectoryTrace t;
    t.meta.config_hash = side.at("config_hash").get<std::string>();
    if (set.traces.empty()) {
      set.config = side.at("config");
      set.config_hash = t.meta.config_hash;
    } else if (t.meta.config_hash != set.config_hash && !force) {
      throw ConfigError(fmt::format("mixed config hashes in '{}' ({} vs {}); pass --force to diagnose anyway",
                                    dir.string(), set.config_hash, t.meta.config_hash));
    }
    t.meta.seed = side.at("seed").get<std::uint64_t>();
    t.meta.run_index = side.at("run_index").get<Index>();
    t.meta.projection = parse_projection_mode(side.at("projection").get<std::string>());
    t.meta.diverged = side.at("diverged").get<bool>();
    t.meta.divergence_step = side.at("divergence_step").get<std::int64_t>();
    t.meta.divergence_message = side.at("divergence_message").get<std::string>();
    for (const auto& l : side.at("layouts")) t.meta.layouts.push_back(layout_from_json(l));
    t.agent_dims = side.at("agent_dims").get<std::vector<Index>>();
    const Index n_rewards = side.at("n_reward_columns").get<Index>();

    fs::path csv_path = side_path;
    csv_path.replace_extension(".csv");
    const CsvTable table = read_csv(csv_path);
    Index dims = 0;
    for (Index d : t.agent_dims) dims += d;
    t.joint.resize(table.values.rows(), dims);
    t.rewards.resize(table.values.rows(), n_rewards);
    const Index h_col = table.column("h");
    for (Index c = 0; c < dims; ++c) t.joint.col(c) = table.col(fmt::format("theta_{}", c));
    for (Index a = 0; a < n_rewards; ++a) t.rewards.col(a) = table.col(fmt::format("reward_{}", a));
    t.steps.resize(static_cast<std::size_t>(table.values.rows()));
    for (Index r = 0; r < table.values.rows(); ++r)
      t.steps[static_cast<std::size_t>(r)] = static_cast<Index>(table.values(r, h_col));
    set.traces.push_back(std::move(t));
  }
  return set;
}

namespace {

json stats_json(const ScalarStats& s) {
  json j;
  j["values"] = s.values;
  if (s.available()) {
    j["mean"] = s.mean;
    j["sd"] = s.sd;
  } else {
    j["mean"] = nullptr;
    j["sd"] = nullptr;
  }
  return j;
}

json nullable(const ScalarStats& s) { return s.available() ? json(s.mean) : json(nullptr); }

}  // namespace

json report_to_json(const DiagnosticsReport& r, const std::string& config_hash) {
  json j;
  j["config_hash"] = config_hash;
  j["n_runs"] = r.n_runs;
  j["n_diverged"] = r.n_diverged;
  j["n_post_burn_samples"] = r.n_post_burn_samples;
  j["dimension"] = r.dimension;
  j["frobenius"] = nullable(r.frobenius);
  j["lambda_max"] = nullable(r.lambda_max);
  j["d2"] = nullable(r.d2);
  j["recurrence_rate"] = r.recurrence ? json(r.recurrence->achieved_rate) : json(nullptr);
  j["per_run"] = {{"frobenius", stats_json(r.frobenius)},
                  {"lambda_max", stats_json(r.lambda_max)},
                  {"d2", stats_json(r.d2)}};
  j["frobenius_pooled"] = r.frobenius_pooled;
  j["lambda_degenerate_runs"] = r.lambda_degenerate;
  j["d2_degenerate_runs"] = r.d2_degenerate;
  if (r.recurrence)
    j["recurrence"] = {{"epsilon", r.recurrence->epsilon},
                       {"target_rate", r.recurrence->target_rate},
                       {"achieved_rate", r.recurrence->achieved_rate},
                       {"mask_width", r.recurrence->mask_width},
                       {"size", r.recurrence->size()}};
  if (r.density) j["density_mass"] = r.density->mass();
  j["errors"] = r.errors;
  return j;
}

std::string density_csv(const EmpiricalDensity& d) {
  std::string out;
  const bool two = d.edges.size() == 2;
  out += two ? "x_lo,x_hi,y_lo,y_hi,count,density\n" : "x_lo,x_hi,count,density\n";
  const Vector& ex = d.edges[0];
  for (Index i = 0; i + 1 < ex.size(); ++i) {
    if (two) {
      const Vector& ey = d.edges[1];
      for (Index k = 0; k + 1 < ey.size(); ++k)
        fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{}\n", ex(i), ex(i + 1), ey(k), ey(k + 1), d.counts(i, k),
                       d.density(i, k));
    } else {
      fmt::format_to(std::back_inserter(out), "{},{},{},{}\n", ex(i), ex(i + 1), d.counts(i, 0), d.density(i, 0));
    }
  }
  return out;
}

std::string lyapunov_curve_csv(const LyapunovFit& fit) {
  std::string out = "z,steps,mean_log_divergence,in_fit\n";
  for (Index z = 0; z < fit.curve.size(); ++z)
    fmt::format_to(std::back_inserter(out), "{},{},{},{}\n", z, static_cast<double>(z) * fit.spacing, fit.curve(z),
                   (z >= fit.z_min && z <= fit.z_max) ? 1 : 0);
  return out;
}

std::string correlation_curve_csv(const CorrelationDimFit& fit) {
  std::string out = "r,c,log_r,log_c,in_fit\n";
  for (Index i = 0; i < fit.radii.size(); ++i) {
    const double c = fit.correlation_sums(i);
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{}\n", fit.radii(i), c, std::log(fit.radii(i)),
                   c > 0 ? fmt::format("{}", std::log(c)) : std::string(),
                   (i >= fit.window_begin && i < fit.window_end) ? 1 : 0);
  }
  return out;
}

std::string recurrence_pgm(const RecurrenceMatrix& rm, const std::string& config_hash) {
  const Index n = rm.size();
  std::string out = "P5\n";
  out += "# recurrence plot: row i = trace index i (time increases downward), column j = trace index j "
         "(time increases to the right)\n";
  out += fmt::format("# values: 255 recurrent, 0 not recurrent, 128 masked identity band |i-j| <= {}\n", rm.mask_width);
  out += fmt::format("# epsilon {} target_rate {} achieved_rate {}\n", rm.epsilon, rm.target_rate, rm.achieved_rate);
  out += fmt::format("# config_hash {}\n", config_hash);
  out += fmt::format("{} {}\n255\n", n, n);
  out.reserve(out.size() + static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out.push_back(static_cast<char>(rm.masked(i, j) ? 128 : (rm.r(i, j) ? 255 : 0)));
  return out;
}

PgmImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path.string()));
  PgmImage img;
  std::string line;
  std::getline(in, line);
  if (line != "P5") throw ConfigError(fmt::format("'{}' is not a binary PGM", path.string()));
  std::vector<long> fields;
  while (fields.size() < 3 && std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') {
      img.comments.push_back(line.substr(std::min<std::size_t>(2, line.size())));
      continue;
    }
    std::istringstream ss(line);
    long v = 0;
    while (ss >> v) fields.push_back(v);
  }
  if (fields.size() < 3 || fields[2] != 255) throw ConfigError(fmt::format("'{}': bad PGM header", path.string()));
  img.width = fields[0];
  img.height = fields[1];
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw ConfigError(fmt::format("'{}': truncated PGM raster", path.string()));
  return img;
}

void write_report_files(const fs::path& report_path, const DiagnosticsReport& report,
                        const std::string& config_hash) {
  const fs::path dir = report_path.parent_path();
  atomic_write_text(report_path, report_to_json(report, config_hash).dump(2) + "\n");
  const std::string tag = fmt::format("# config_hash {}\n", config_hash);
  if (report.density) atomic_write_text(dir / "density.csv", tag + density_csv(*report.density));
  if (report.lyapunov_example)
    atomic_write_text(dir / "lyapunov_curve.csv", tag + lyapunov_curve_csv(*report.lyapunov_example));
  if (report.correlation_example)
    atomic_write_text(dir / "correlation_curve.csv", tag + correlation_curve_csv(*report.correlation_example));
  if (report.recurrence) atomic_write_text(dir / "recurrence.pgm", recurrence_pgm(*report.recurrence, config_hash));
}

}  // namespace marl_dyn
