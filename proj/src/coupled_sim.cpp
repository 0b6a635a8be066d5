#include "marl_dyn/coupled_sim.hpp"

#include "marl_dyn/parallel.hpp"

#include <cmath>
#include <fmt/format.h>

namespace marl_dyn {

namespace {

bool within_guard(const Agent& agent) {
  auto ok = [](const auto& m) { return m.allFinite() && (m.size() == 0 || m.cwiseAbs().maxCoeff() <= kDivergenceGuard); };
  if (const auto* a = std::get_if<TabularQAgent>(&agent)) return ok(a->table.values);
  if (const auto* a = std::get_if<ReinforceAgent>(&agent)) return ok(a->policy.logits);
  const auto& net = std::get<DqnAgent>(agent).online;
  for (const auto& l : net.layers)
    if (!ok(l.weights) || !ok(l.bias)) return false;
  return true;
}

MlpParams network_of(const AgentLayout& layout, const Eigen::Ref<const Vector>& theta) {
  MlpParams net = zero_mlp(layout.layer_sizes);
  unflatten(theta, net);
  return net;
}

Vector table_row(const AgentLayout& layout, const Eigen::Ref<const Vector>& theta) {
  return theta.segment(layout.projection_state * layout.n_actions, layout.n_actions);
}

}  // namespace

std::string to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::raw_params: return "raw_params";
    case ProjectionMode::action_prob: return "action_prob";
    case ProjectionMode::q_of_action0: return "q_of_action0";
  }
  return "?";
}

ProjectionMode parse_projection_mode(const std::string& s) {
  if (s == "raw_params") return ProjectionMode::raw_params;
  if (s == "action_prob") return ProjectionMode::action_prob;
  if (s == "q_of_action0") return ProjectionMode::q_of_action0;
  throw ConfigError(fmt::format("unknown projection '{}' (expected raw_params, action_prob or q_of_action0)", s));
}

Game make_game(const GameSpec& spec) {
  if (spec.name == "gridworld") {
    validate(spec.gridworld);
    return spec.gridworld;
  }
  if (spec.name == "custom") {
    if (!spec.payoffs) throw ConfigError("game 'custom' requires eight payoffs");
    return make_custom_game(*spec.payoffs);
  }
  if (spec.payoffs) throw ConfigError("payoffs may only be given for game 'custom'");
  return make_matrix_game(spec.name);
}

void check_projection(const Game& game, const std::array<LearnerSpec, 2>& agents, ProjectionMode mode) {
  if (mode != ProjectionMode::action_prob) return;
  if (!is_stateless(game)) throw ConfigError("projection action_prob requires a stateless matrix game");
  for (const auto& a : agents)
    if (a.kind != LearnerKind::reinforce && a.exploration.mode != ExplorationMode::boltzmann)
      throw ConfigError("projection action_prob requires Boltzmann exploration or policy logits");
}

void SimConfig::validate() const {
  const Game g = make_game(game);
  for (const auto& a : agents) a.validate();
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (n_burn < 0 || n_burn >= n_steps) throw ConfigError("n_burn must lie in [0, n_steps)");
  if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
  if (record_stride < 1) throw ConfigError("record_stride must be >= 1");
  if (record_stride > n_steps) throw ConfigError("record_stride must not exceed n_steps");
  check_projection(g, agents, projection);
}

Index TrajectoryTrace::agent_offset(std::size_t agent) const {
  Index off = 0;
  for (std::size_t i = 0; i < agent; ++i) off += agent_dims[i];
  return off;
}

Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> TrajectoryTrace::agent_block(std::size_t agent) const {
  require(agent < agent_dims.size(), "agent index out of range");
  return joint.middleCols(agent_offset(agent), agent_dims[agent]);
}

std::uint64_t run_seed(std::uint64_t base_seed, Index run_index) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(run_index)});
}

Index projected_size(const AgentLayout& layout, ProjectionMode mode) {
  return mode == ProjectionMode::raw_params ? layout.parameter_count : 1;
}

Vector project_params(const AgentLayout& layout, const Eigen::Ref<const Vector>& theta, ProjectionMode mode) {
  require(theta.size() == layout.parameter_count, "parameter vector does not match the agent layout");
  if (mode == ProjectionMode::raw_params) return theta;
  Vector values;
  if (layout.kind == LearnerKind::idqn) {
    values = mlp_forward_one(network_of(layout, theta), layout.projection_input);
  } else {
    values = table_row(layout, theta);
  }
  Vector out(1);
  if (mode == ProjectionMode::q_of_action0) {
    out(0) = values(0);
    return out;
  }
  if (layout.kind != LearnerKind::reinforce && layout.exploration != ExplorationMode::boltzmann)
    throw ConfigError("projection action_prob requires Boltzmann exploration or policy logits");
  if (layout.kind != LearnerKind::idqn && layout.n_states != 1)
    throw ConfigError("projection action_prob requires a stateless matrix game");
  out(0) = boltzmann_probs(values, layout.temperature)(0);
  return out;
}

TrajectoryTrace run_training(const SimConfig& config, Index run_index) {
  config.validate();
  const Game game = make_game(config.game);
  const bool stateless = is_stateless(game);
  const auto* grid = std::get_if<GridworldGame>(&game);
  const Index states = n_states(game);
  const int actions = n_actions(game);
  const Index features = feature_size(game);
  const StateId start = initial_state(game);
  const Vector start_features = state_features(game, start);

  RngStreams streams(run_seed(config.seed, run_index));
  std::vector<Agent> agents;
  std::vector<Rng> action_rng, batch_rng;
  TrajectoryTrace trace;
  trace.meta.config_hash = config.config_hash;
  trace.meta.seed = streams.seed();
  trace.meta.run_index = run_index;
  trace.meta.projection = config.projection;
  for (std::size_t i = 0; i < config.agents.size(); ++i) {
    Rng init = streams.make(StreamKind::init, i);
    agents.push_back(make_agent(config.agents[i], states, actions, features, init));
    action_rng.push_back(streams.make(StreamKind::action, i));
    batch_rng.push_back(streams.make(StreamKind::minibatch, i));
    trace.meta.layouts.push_back(layout_of(agents.back(), start.index, start_features));
    trace.agent_dims.push_back(projected_size(trace.meta.layouts.back(), config.projection));
  }

  const Index n_rows = config.n_steps / config.record_stride;
  Index width = 0;
  for (Index d : trace.agent_dims) width += d;
  trace.joint.resize(n_rows, width);
  trace.rewards.resize(n_rows, static_cast<Index>(agents.size()));
  trace.steps.reserve(static_cast<std::size_t>(n_rows));

  StateId state = start;
  Vector state_feat = start_features;
  int episode_len = 0;
  Eigen::Vector2d reward_sum = Eigen::Vector2d::Zero();
  Index row = 0;

  for (Index h = 1; h <= config.n_steps; ++h) {
    JointAction joint{};
    for (std::size_t i = 0; i < agents.size(); ++i)
      joint[i] = select_action(agents[i], state.index, state_feat, h - 1, action_rng[i]);
    const StepResult res = step(game, state, joint, streams.environment());
    ++episode_len;
    const bool truncated = grid && !res.terminal && episode_len >= grid->max_episode_steps;
    const bool episode_end = res.terminal || truncated;
    const bool bootstrap_terminal = res.terminal && !(stateless && config.repeated_game_bootstrap);
    const Vector next_feat = stateless ? state_feat : state_features(game, res.next);

    for (std::size_t i = 0; i < agents.size(); ++i) {
      const Transition t{state.index, joint[i], res.rewards[i], res.next.index, bootstrap_terminal};
      observe(agents[i], t, state_feat, next_feat, episode_end, batch_rng[i]);
      if (!within_guard(agents[i]))
        throw DivergenceError(h, fmt::format("agent {} parameters left the finite range |theta| <= {:g} at update {}",
                                             i, kDivergenceGuard, h));
      reward_sum(static_cast<Index>(i)) += res.rewards[i];
    }

    if (episode_end) {
      state = start;
      state_feat = start_features;
      episode_len = 0;
    } else {
      state = res.next;
      state_feat = next_feat;
    }

    if (h % config.record_stride == 0) {
      Index col = 0;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        trace.joint.row(row).segment(col, trace.agent_dims[i]) =
            project_params(trace.meta.layouts[i], flatten_params(agents[i]), config.projection).transpose();
        col += trace.agent_dims[i];
      }
      trace.rewards.row(row) = (reward_sum / static_cast<double>(config.record_stride)).transpose();
      reward_sum.setZero();
      trace.steps.push_back(h);
      ++row;
    }
  }
  return trace;
}

TrajectoryTrace project_trace(const TrajectoryTrace& trace, ProjectionMode mode) {
  if (mode == trace.meta.projection) return trace;
  if (trace.meta.projection != ProjectionMode::raw_params)
    throw ConfigError("only raw_params traces can be re-projected");
  TrajectoryTrace out = trace;
  out.meta.projection = mode;
  out.agent_dims.clear();
  for (const auto& l : trace.meta.layouts) out.agent_dims.push_back(projected_size(l, mode));
  Index width = 0;
  for (Index d : out.agent_dims) width += d;
  out.joint.resize(trace.rows(), width);
  for (Index r = 0; r < trace.rows(); ++r) {
    Index col = 0;
    for (std::size_t i = 0; i < trace.agent_dims.size(); ++i) {
      const Vector theta = trace.agent_block(i).row(r).transpose();
      out.joint.row(r).segment(col, out.agent_dims[i]) = project_params(trace.meta.layouts[i], theta, mode).transpose();
      col += out.agent_dims[i];
    }
  }
  return out;
}

std::vector<TrajectoryTrace> run_ensemble(const SimConfig& config, std::size_t workers) {
  config.validate();
  std::vector<TrajectoryTrace> traces(static_cast<std::size_t>(config.n_runs));
  parallel_for(traces.size(), workers == 0 ? worker_count() : workers, [&](std::size_t i) {
    const auto run_index = static_cast<Index>(i);
    try {
      traces[i] = run_training(config, run_index);
    } catch (const DivergenceError& e) {
      TrajectoryTrace& t = traces[i];
      t.meta.config_hash = config.config_hash;
      t.meta.seed = run_seed(config.seed, run_index);
      t.meta.run_index = run_index;
      t.meta.projection = config.projection;
      t.meta.diverged = true;
      t.meta.divergence_step = e.update_index();
      t.meta.divergence_message = e.what();
    }
  });
  return traces;
}

Matrix post_burn(const TrajectoryTrace& trace, Index n_burn) {
  Index first = 0;
  while (first < trace.rows() && trace.steps[static_cast<std::size_t>(first)] <= n_burn) ++first;
  if (first >= trace.rows())
    throw ConfigError(fmt::format("n_burn = {} leaves no recorded rows (last recorded update {})", n_burn,
                                  trace.steps.empty() ? 0 : trace.steps.back()));
  return trace.joint.bottomRows(trace.rows() - first);
}

Matrix post_burn_samples(const std::vector<TrajectoryTrace>& traces, Index n_burn) {
  std::vector<Matrix> parts;
  Index total = 0, width = -1;
  for (const auto& t : traces) {
    if (t.meta.diverged) continue;
    parts.push_back(post_burn(t, n_burn));
    if (width >= 0 && parts.back().cols() != width) throw ContractViolation("traces have different widths");
    width = parts.back().cols();
    total += parts.back().rows();
  }
  if (parts.empty()) throw ContractViolation("no non-diverged traces to pool");
  Matrix out(total, width);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

}  // namespace marl_dyn
