#include "marl_dyn/config.hpp"

#include "marl_dyn/io.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

namespace marl_dyn {

namespace {

/// Typed, path-aware access to one JSON object; remembers which keys were consumed.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), at(key));
  }

  const Json* raw(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(fmt::format("{}: {}", path, what));
  }

  template <typename T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) fail(path, "expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) fail(path, "expected a finite number");
      return d;
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        fail(path, "expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      return static_cast<T>(v.get<std::int64_t>());
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Re-throws validation failures from module types with the config key prefixed.
template <typename Fn>
void validated(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}.{}", path, e.what()));
  }
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) Reader::fail(path, what);
}

GridCell read_cell(const Json& v, const std::string& path) {
  check(v.is_array() && v.size() == 2, path, "expected [x, y]");
  return GridCell{Reader::convert<int>(v[0], path + "[0]"), Reader::convert<int>(v[1], path + "[1]")};
}

std::array<GridCell, 2> read_cells(const Json* v, const std::string& path, std::array<GridCell, 2> fallback) {
  if (!v) return fallback;
  check(v->is_array() && v->size() == 2, path, "expected two [x, y] cells");
  return {read_cell((*v)[0], path + "[0]"), read_cell((*v)[1], path + "[1]")};
}

GridworldGame read_gridworld(const Json* v, const std::string& path) {
  GridworldGame g;
  if (!v) return g;
  Reader r(*v, path);
  g.width = r.get("width", g.width);
  g.height = r.get("height", g.height);
  g.start_positions = read_cells(r.raw("starts"), r.at("starts"), g.start_positions);
  g.goal_cells = read_cells(r.raw("goals"), r.at("goals"), g.goal_cells);
  g.max_episode_steps = r.get("max_episode_steps", g.max_episode_steps);
  g.step_penalty = r.get("step_penalty", g.step_penalty);
  g.joint_goal_reward = r.get("joint_goal_reward", g.joint_goal_reward);
  r.finish();
  try {
    validate(g);
  } catch (const ConfigError& e) {
    Reader::fail(path, e.what());
  }
  return g;
}

LearnerSpec default_learner(LearnerKind kind) {
  LearnerSpec s;
  s.kind = kind;
  switch (kind) {
    case LearnerKind::tabular_q:
      s.learning_rate = 0.01;
      s.exploration.mode = ExplorationMode::boltzmann;
      break;
    case LearnerKind::reinforce:
      s.learning_rate = 0.01;
      s.exploration.mode = ExplorationMode::boltzmann;
      break;
    case LearnerKind::idqn:
      s.learning_rate = 1e-3;
      s.exploration.mode = ExplorationMode::epsilon_greedy;
      break;
  }
  return s;
}

LearnerSpec read_learner(const Json& v, const std::string& path, Index n_steps) {
  Reader r(v, path);
  check(r.has("type"), r.at("type"), "required (tabular_q, reinforce or idqn)");
  const std::string type = r.get<std::string>("type", "");
  LearnerKind kind{};
  try {
    kind = parse_learner_kind(type);
  } catch (const ConfigError& e) {
    Reader::fail(r.at("type"), e.what());
  }
  LearnerSpec s = default_learner(kind);
  s.learning_rate = r.get("learning_rate", s.learning_rate);
  check(s.learning_rate >= 0.0 && (kind != LearnerKind::tabular_q || s.learning_rate <= 1.0), r.at("learning_rate"),
        kind == LearnerKind::tabular_q ? "must lie in [0, 1]" : "must be >= 0");
  s.gamma = r.get("gamma", s.gamma);
  check(s.gamma >= 0.0 && s.gamma < 1.0, r.at("gamma"), fmt::format("must lie in [0, 1) (got {:g})", s.gamma));

  s.exploration.decay_rate = 5.0 / static_cast<double>(n_steps);
  if (kind != LearnerKind::reinforce) {
    if (const Json* e = r.raw("exploration")) {
      Reader er(*e, r.at("exploration"));
      const std::string mode = er.get<std::string>("mode", to_string(s.exploration.mode));
      try {
        s.exploration.mode = parse_exploration_mode(mode);
      } catch (const ConfigError& ex) {
        Reader::fail(er.at("mode"), ex.what());
      }
      s.exploration.temperature = er.get("temperature", s.exploration.temperature);
      check(s.exploration.temperature > 0.0, er.at("temperature"), "must be > 0");
      s.exploration.eps_start = er.get("eps_start", s.exploration.eps_start);
      check(s.exploration.eps_start >= 0.0 && s.exploration.eps_start <= 1.0, er.at("eps_start"), "must lie in [0, 1]");
      s.exploration.eps_end = er.get("eps_end", s.exploration.eps_end);
      check(s.exploration.eps_end >= 0.0 && s.exploration.eps_end <= s.exploration.eps_start, er.at("eps_end"),
            "must lie in [0, eps_start]");
      s.exploration.decay_rate = er.get("decay_rate", s.exploration.decay_rate);
      check(s.exploration.decay_rate > 0.0, er.at("decay_rate"), "must be > 0");
      er.finish();
    }
  }
  if (kind == LearnerKind::reinforce) {
    const std::string baseline = r.get<std::string>("baseline", to_string(s.baseline));
    try {
      s.baseline = parse_baseline_mode(baseline);
    } catch (const ConfigError& e) {
      Reader::fail(r.at("baseline"), e.what());
    }
    s.baseline_rate = r.get("baseline_rate", s.baseline_rate);
    check(s.baseline_rate > 0.0 && s.baseline_rate <= 1.0, r.at("baseline_rate"), "must lie in (0, 1]");
  }
  if (kind == LearnerKind::idqn) {
    if (const Json* h = r.raw("hidden")) {
      check(h->is_array() && !h->empty(), r.at("hidden"), "expected a non-empty list of layer widths");
      s.hidden.clear();
      for (std::size_t i = 0; i < h->size(); ++i) {
        const auto w = Reader::convert<Index>((*h)[i], fmt::format("{}[{}]", r.at("hidden"), i));
        check(w >= 1, fmt::format("{}[{}]", r.at("hidden"), i), "must be >= 1");
        s.hidden.push_back(w);
      }
    }
    s.buffer_capacity = r.get("buffer_capacity", s.buffer_capacity);
    check(s.buffer_capacity >= 1, r.at("buffer_capacity"), "must be >= 1");
    s.batch_size = r.get("batch_size", s.batch_size);
    check(s.batch_size >= 1 && s.batch_size <= s.buffer_capacity, r.at("batch_size"), "must lie in [1, buffer_capacity]");
    s.target_sync = r.get("target_sync", s.target_sync);
    check(s.target_sync >= 1, r.at("target_sync"), "must be >= 1");
    s.use_replay = r.get("use_replay", s.use_replay);
  }
  r.finish();
  validated(path, [&] { s.validate(); });
  return s;
}

Json learner_to_json(const LearnerSpec& s) {
  Json j;
  j["type"] = to_string(s.kind);
  j["learning_rate"] = s.learning_rate;
  j["gamma"] = s.gamma;
  if (s.kind != LearnerKind::reinforce) {
    j["exploration"] = {{"mode", to_string(s.exploration.mode)},
                        {"temperature", s.exploration.temperature},
                        {"eps_start", s.exploration.eps_start},
                        {"eps_end", s.exploration.eps_end},
                        {"decay_rate", s.exploration.decay_rate}};
  } else {
    j["baseline"] = to_string(s.baseline);
    j["baseline_rate"] = s.baseline_rate;
  }
  if (s.kind == LearnerKind::idqn) {
    j["hidden"] = s.hidden;
    j["buffer_capacity"] = s.buffer_capacity;
    j["batch_size"] = s.batch_size;
    j["target_sync"] = s.target_sync;
    j["use_replay"] = s.use_replay;
  }
  return j;
}

DiagnosticsSettings read_diagnostics(const Json* v, const std::string& path) {
  DiagnosticsSettings d;
  if (!v) return d;
  Reader r(*v, path);
  d.theiler_w = r.get("theiler_w", d.theiler_w);
  d.z_min = r.get("z_min", d.z_min);
  d.z_max = r.get("z_max", d.z_max);
  d.target_rate = r.get("target_rate", d.target_rate);
  check(d.target_rate > 0.0 && d.target_rate < 1.0, r.at("target_rate"), "must lie in (0, 1)");
  d.recurrence_mask = r.get("recurrence_mask", d.recurrence_mask);
  d.n_radii = r.get("n_radii", d.n_radii);
  d.embed_m = r.get("embed_m", d.embed_m);
  d.embed_tau = r.get("embed_tau", d.embed_tau);
  d.embed_scalar = r.get("embed_scalar", d.embed_scalar);
  d.max_points = r.get("max_points", d.max_points);
  if (const Json* b = r.raw("density_bins")) {
    check(b->is_array(), r.at("density_bins"), "expected a list of bin counts");
    d.density_bins.clear();
    for (std::size_t i = 0; i < b->size(); ++i)
      d.density_bins.push_back(Reader::convert<Index>((*b)[i], fmt::format("{}[{}]", r.at("density_bins"), i)));
  }
  if (const Json* g = r.raw("density_range")) {
    check(g->is_array(), r.at("density_range"), "expected a list of [lo, hi] pairs");
    for (std::size_t i = 0; i < g->size(); ++i) {
      const std::string p = fmt::format("{}[{}]", r.at("density_range"), i);
      check((*g)[i].is_array() && (*g)[i].size() == 2, p, "expected [lo, hi]");
      d.density_range.emplace_back(Reader::convert<double>((*g)[i][0], p), Reader::convert<double>((*g)[i][1], p));
    }
  }
  r.finish();
  validated(path, [&] { d.validate(); });
  return d;
}

Json diagnostics_to_json(const DiagnosticsSettings& d) {
  Json j;
  j["theiler_w"] = d.theiler_w;
  j["z_min"] = d.z_min;
  j["z_max"] = d.z_max;
  j["target_rate"] = d.target_rate;
  j["recurrence_mask"] = d.recurrence_mask;
  j["n_radii"] = d.n_radii;
  j["embed_m"] = d.embed_m;
  j["embed_tau"] = d.embed_tau;
  j["embed_scalar"] = d.embed_scalar;
  j["max_points"] = d.max_points;
  j["density_bins"] = d.density_bins;
  j["density_range"] = Json::array();
  for (const auto& [lo, hi] : d.density_range) j["density_range"].push_back({lo, hi});
  return j;
}

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  return parts;
}

void patch_at(Json& node, const std::vector<std::string>& parts, std::size_t k, const Json& value,
              const std::string& dotted, int& hits) {
  if (k == parts.size()) {
    if (!(node.is_number() || node.is_boolean() || node.is_string()))
      throw ConfigError(fmt::format("sweep key '{}' does not resolve to a scalar field", dotted));
    node = value;
    ++hits;
    return;
  }
  const std::string& p = parts[k];
  if (node.is_array()) {
    if (p == "*") {
      for (auto& item : node) patch_at(item, parts, k + 1, value, dotted, hits);
      return;
    }
    std::size_t idx = 0;
    try {
      idx = std::stoul(p);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("sweep key '{}': '{}' is not an array index", dotted, p));
    }
    if (idx >= node.size()) throw ConfigError(fmt::format("sweep key '{}': index {} out of range", dotted, idx));
    patch_at(node[idx], parts, k + 1, value, dotted, hits);
    return;
  }
  if (!node.is_object() || !node.contains(p))
    throw ConfigError(fmt::format("sweep key '{}' does not resolve ('{}' missing)", dotted, p));
  patch_at(node[p], parts, k + 1, value, dotted, hits);
}

}  // namespace

RunConfig config_from_json(const Json& doc) {
  Reader r(doc, "");
  RunConfig c;
  c.schema_version = r.get("schema_version", kSchemaVersion);
  check(c.schema_version == kSchemaVersion, "schema_version",
        fmt::format("unsupported version {} (expected {})", c.schema_version, kSchemaVersion));

  SimConfig& s = c.sim;
  check(r.has("game"), "game", "required");
  s.game.name = r.get<std::string>("game", s.game.name);
  const bool grid = s.game.name == "gridworld";
  if (const Json* p = r.raw("payoffs")) {
    check(s.game.name == "custom", "payoffs", "only allowed with game 'custom'");
    check(p->is_array() && p->size() == 8, "payoffs", "expected eight reals");
    std::array<double, 8> e{};
    for (std::size_t i = 0; i < 8; ++i) e[i] = Reader::convert<double>((*p)[i], fmt::format("payoffs[{}]", i));
    s.game.payoffs = e;
  }
  if (const Json* g = r.raw("gridworld")) {
    check(grid, "gridworld", "only allowed with game 'gridworld'");
    s.game.gridworld = read_gridworld(g, "gridworld");
  }
  try {
    (void)make_game(s.game);
  } catch (const ConfigError& e) {
    Reader::fail("game", e.what());
  }

  s.n_steps = r.get<Index>("n_steps", grid ? 200000 : 50000);
  check(s.n_steps >= 1, "n_steps", "must be >= 1");
  s.n_burn = r.get<Index>("n_burn", std::min<Index>(grid ? 40000 : 10000, s.n_steps / 5));
  check(s.n_burn >= 0 && s.n_burn < s.n_steps, "n_burn", fmt::format("must lie in [0, n_steps = {})", s.n_steps));
  s.n_runs = r.get("n_runs", s.n_runs);
  check(s.n_runs >= 1, "n_runs", "must be >= 1");
  s.seed = r.get("seed", s.seed);
  s.record_stride = r.get("record_stride", s.record_stride);
  check(s.record_stride >= 1 && s.record_stride <= s.n_steps, "record_stride", "must lie in [1, n_steps]");
  try {
    s.projection = parse_projection_mode(r.get<std::string>("projection", to_string(s.projection)));
  } catch (const ConfigError& e) {
    Reader::fail("projection", e.what());
  }
  s.repeated_game_bootstrap = r.get("repeated_game_bootstrap", s.repeated_game_bootstrap);

  check(r.has("agents"), "agents", "required (two learner entries)");
  const Json* agents = r.raw("agents");
  check(agents->is_array() && agents->size() == 2, "agents", "expected exactly two learner entries");
  for (std::size_t i = 0; i < 2; ++i) s.agents[i] = read_learner((*agents)[i], fmt::format("agents.{}", i), s.n_steps);

  try {
    check_projection(make_game(s.game), s.agents, s.projection);
  } catch (const ConfigError& e) {
    Reader::fail("projection", e.what());
  }

  c.diagnostics = read_diagnostics(r.raw("diagnostics"), "diagnostics");

  if (const Json* sw = r.raw("sweep")) {
    Reader sr(*sw, "sweep");
    SweepSpec spec;
    check(sr.has("key"), "sweep.key", "required");
    spec.key = sr.get<std::string>("key", "");
    const Json* vals = sr.raw("values");
    check(vals && vals->is_array() && !vals->empty(), "sweep.values", "expected a non-empty list of numbers");
    for (std::size_t i = 0; i < vals->size(); ++i)
      spec.values.push_back(Reader::convert<double>((*vals)[i], fmt::format("sweep.values[{}]", i)));
    sr.finish();
    c.sweep = std::move(spec);
  }
  r.finish();
  validated("config", [&] { s.validate(); });
  if (c.sweep) {
    // the key must address a scalar of the resolved document
    Json probe = config_to_json(c);
    probe.erase("sweep");
    patch_json(probe, c.sweep->key, Json(c.sweep->values.front()));
  }
  return c;
}

Json config_to_json(const RunConfig& c) {
  const SimConfig& s = c.sim;
  Json j;
  j["schema_version"] = c.schema_version;
  j["game"] = s.game.name;
  if (s.game.payoffs) j["payoffs"] = *s.game.payoffs;
  if (s.game.name == "gridworld") {
    const auto& g = s.game.gridworld;
    auto cells = [](const std::array<GridCell, 2>& cs) {
      return Json::array({Json::array({cs[0].x, cs[0].y}), Json::array({cs[1].x, cs[1].y})});
    };
    j["gridworld"] = {{"width", g.width},
                      {"height", g.height},
                      {"starts", cells(g.start_positions)},
                      {"goals", cells(g.goal_cells)},
                      {"max_episode_steps", g.max_episode_steps},
                      {"step_penalty", g.step_penalty},
                      {"joint_goal_reward", g.joint_goal_reward}};
  }
  j["agents"] = Json::array({learner_to_json(s.agents[0]), learner_to_json(s.agents[1])});
  j["n_steps"] = s.n_steps;
  j["n_burn"] = s.n_burn;
  j["n_runs"] = s.n_runs;
  j["seed"] = s.seed;
  j["record_stride"] = s.record_stride;
  j["projection"] = to_string(s.projection);
  j["repeated_game_bootstrap"] = s.repeated_game_bootstrap;
  j["diagnostics"] = diagnostics_to_json(c.diagnostics);
  if (c.sweep) j["sweep"] = {{"key", c.sweep->key}, {"values", c.sweep->values}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
  RunConfig c = config_from_json(doc);
  c.sim.config_hash = config_hash(c);
  return c;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  const std::string text = config_to_json(config).dump(2) + "\n";
  atomic_write_text(path, text);
}

std::string config_hash(const RunConfig& config) {
  Json j = config_to_json(config);
  return fnv1a_hex(j.dump());
}

void patch_json(Json& doc, const std::string& dotted_key, const Json& value) {
  const auto parts = split_path(dotted_key);
  if (parts.empty()) throw ConfigError("empty sweep key");
  int hits = 0;
  patch_at(doc, parts, 0, value, dotted_key, hits);
  if (hits == 0) throw ConfigError(fmt::format("sweep key '{}' matched no fields", dotted_key));
}

Json read_json_path(const Json& doc, const std::string& dotted_key) {
  const Json* node = &doc;
  for (const auto& p : split_path(dotted_key)) {
    if (node->is_array()) {
      const std::size_t idx = p == "*" ? 0 : std::stoul(p);
      if (idx >= node->size()) throw ConfigError(fmt::format("key '{}' out of range", dotted_key));
      node = &(*node)[idx];
    } else if (node->is_object() && node->contains(p)) {
      node = &node->at(p);
    } else {
      throw ConfigError(fmt::format("key '{}' does not resolve", dotted_key));
    }
  }
  return *node;
}

}  // namespace marl_dyn
