#include "marl_dyn/learners.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace marl_dyn {

namespace {

template <typename... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Vector table_row_major(const Matrix& m) {
  Vector v(m.size());
  Index at = 0;
  for (Index s = 0; s < m.rows(); ++s)
    for (Index a = 0; a < m.cols(); ++a) v(at++) = m(s, a);
  return v;
}

void fill_row_major(const Eigen::Ref<const Vector>& v, Matrix& m) {
  require(v.size() == m.size(), "parameter vector length mismatch");
  Index at = 0;
  for (Index s = 0; s < m.rows(); ++s)
    for (Index a = 0; a < m.cols(); ++a) m(s, a) = v(at++);
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(fmt::format("{} must lie in [0, 1]", name));
}

}  // namespace

void ExplorationSchedule::validate() const {
  if (mode == ExplorationMode::boltzmann) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
    return;
  }
  check_probability(eps_start, "eps_start");
  check_probability(eps_end, "eps_end");
  if (eps_end > eps_start) throw ConfigError("eps_end must lie in [0, eps_start]");
  if (!(decay_rate > 0.0) || !std::isfinite(decay_rate)) throw ConfigError("decay_rate must be > 0");
}

Vector boltzmann_probs(const Eigen::Ref<const Vector>& q_row, double temperature) {
  require(temperature > 0.0 && std::isfinite(temperature), "boltzmann temperature must be positive and finite");
  require(q_row.size() > 0 && q_row.allFinite(), "boltzmann input must be non-empty and finite");
  Vector p = ((q_row.array() - q_row.maxCoeff()) / temperature).exp().matrix();
  return p / p.sum();
}

int greedy_action(const Eigen::Ref<const Vector>& q_row) {
  require(q_row.size() > 0, "empty action-value row");
  Index best = 0;
  for (Index a = 1; a < q_row.size(); ++a)
    if (q_row(a) > q_row(best)) best = a;
  return static_cast<int>(best);
}

int sample_categorical(const Eigen::Ref<const Vector>& probs, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u = u01(rng);
  double acc = 0.0;
  for (Index a = 0; a + 1 < probs.size(); ++a) {
    acc += probs(a);
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size() - 1);
}

int select_action(const Eigen::Ref<const Vector>& q_row, const ExplorationSchedule& schedule, Index h, Rng& rng) {
  if (schedule.mode == ExplorationMode::boltzmann) return sample_categorical(boltzmann_probs(q_row, schedule.temperature), rng);
  require(q_row.allFinite(), "action values must be finite");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) < schedule.epsilon(h)) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(q_row.size()) - 1);
    return pick(rng);
  }
  return greedy_action(q_row);
}

QTable make_q_table(Index n_states, Index n_actions, double learning_rate, double gamma) {
  require(n_states >= 1 && n_actions >= 1, "Q-table needs at least one state and action");
  return QTable{Matrix::Zero(n_states, n_actions), learning_rate, gamma};
}

void q_update(QTable& table, const Transition& t) {
  require(t.state >= 0 && t.state < table.values.rows() && t.next_state >= 0 && t.next_state < table.values.rows(),
          "transition state out of range");
  require(t.action >= 0 && t.action < table.values.cols(), "transition action out of range");
  double target = t.reward;
  if (!t.terminal) target += table.gamma * table.values.row(t.next_state).maxCoeff();
  double& q = table.values(t.state, t.action);
  q += table.learning_rate * (target - q);
}

PolicyLogits make_policy(Index n_states, Index n_actions, double learning_rate, double gamma, BaselineMode baseline) {
  require(n_states >= 1 && n_actions >= 1, "policy needs at least one state and action");
  PolicyLogits p;
  p.logits = Matrix::Zero(n_states, n_actions);
  p.learning_rate = learning_rate;
  p.gamma = gamma;
  p.baseline = baseline;
  return p;
}

Vector log_softmax_gradient(const Eigen::Ref<const Vector>& logits, int action) {
  Vector g = -boltzmann_probs(logits, 1.0);
  g(action) += 1.0;
  return g;
}

void reinforce_update(PolicyLogits& policy, const std::vector<EpisodeStep>& episode) {
  require(!episode.empty(), "REINFORCE needs a non-empty episode");
  const std::size_t n = episode.size();
  std::vector<double> returns(n);
  double g = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    g = episode[t].reward + policy.gamma * g;
    returns[t] = g;
  }
  double baseline = 0.0;
  if (policy.baseline == BaselineMode::mean_return) {
    for (double r : returns) baseline += r;
    baseline /= static_cast<double>(n);
  } else if (policy.baseline == BaselineMode::running_mean) {
    baseline = policy.running_baseline;
  }

  Matrix step = Matrix::Zero(policy.logits.rows(), policy.logits.cols());
  for (std::size_t t = 0; t < n; ++t) {
    const auto& e = episode[t];
    require(e.state >= 0 && e.state < policy.logits.rows() && e.action >= 0 && e.action < policy.logits.cols(),
            "episode step out of range");
    const double advantage = returns[t] - baseline;
    if (advantage == 0.0) continue;
    step.row(e.state) += policy.learning_rate * advantage *
                         log_softmax_gradient(policy.logits.row(e.state).transpose(), e.action).transpose();
  }
  policy.logits += step;
  if (policy.baseline == BaselineMode::running_mean)
    policy.running_baseline += policy.running_rate * (returns.front() - policy.running_baseline);
}

ReplayBuffer::ReplayBuffer(Index capacity, Index batch_size, Index feature_size)
    : capacity_(capacity),
      batch_size_(batch_size),
      states_(feature_size, capacity),
      next_states_(feature_size, capacity),
      actions_(static_cast<std::size_t>(capacity)),
      rewards_(static_cast<std::size_t>(capacity)),
      terminal_(static_cast<std::size_t>(capacity)) {
  require(capacity >= 1 && batch_size >= 1 && batch_size <= capacity, "replay buffer needs 1 <= batch <= capacity");
}

void ReplayBuffer::push(const Eigen::Ref<const Vector>& state, int action, double reward,
                        const Eigen::Ref<const Vector>& next_state, bool terminal) {
  states_.col(head_) = state;
  next_states_.col(head_) = next_state;
  const auto k = static_cast<std::size_t>(head_);
  actions_[k] = action;
  rewards_[k] = reward;
  terminal_[k] = terminal;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

DqnBatch ReplayBuffer::sample(Rng& rng) const {
  require(can_sample(), "replay buffer holds fewer transitions than one batch");
  std::uniform_int_distribution<Index> pick(0, size_ - 1);
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(batch_size_));
  while (static_cast<Index>(chosen.size()) < batch_size_) {
    const Index k = pick(rng);
    if (std::find(chosen.begin(), chosen.end(), k) == chosen.end()) chosen.push_back(k);
  }
  DqnBatch b;
  b.states.resize(states_.rows(), batch_size_);
  b.next_states.resize(states_.rows(), batch_size_);
  b.rewards.resize(batch_size_);
  b.actions.resize(chosen.size());
  b.terminal.resize(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const Index k = chosen[i];
    const auto col = static_cast<Index>(i);
    b.states.col(col) = states_.col(k);
    b.next_states.col(col) = next_states_.col(k);
    b.actions[i] = actions_[static_cast<std::size_t>(k)];
    b.rewards(col) = rewards_[static_cast<std::size_t>(k)];
    b.terminal[i] = terminal_[static_cast<std::size_t>(k)];
  }
  return b;
}

void LearnerSpec::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (kind == LearnerKind::tabular_q && learning_rate > 1.0) throw ConfigError("learning_rate must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  exploration.validate();
  if (kind == LearnerKind::idqn) {
    if (hidden.empty()) throw ConfigError("hidden must list at least one layer width");
    for (Index w : hidden)
      if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
    if (batch_size < 1 || batch_size > buffer_capacity) throw ConfigError("batch_size must lie in [1, buffer_capacity]");
    if (target_sync < 1) throw ConfigError("target_sync must be >= 1");
  }
  if (!(baseline_rate > 0.0 && baseline_rate <= 1.0)) throw ConfigError("baseline_rate must lie in (0, 1]");
}

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::tabular_q: return "tabular_q";
    case LearnerKind::reinforce: return "reinforce";
    case LearnerKind::idqn: return "idqn";
  }
  return "?";
}

std::string to_string(ExplorationMode mode) {
  return mode == ExplorationMode::boltzmann ? "boltzmann" : "epsilon_greedy";
}

std::string to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::none: return "none";
    case BaselineMode::mean_return: return "mean_return";
    case BaselineMode::running_mean: return "running_mean";
  }
  return "?";
}

LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "tabular_q") return LearnerKind::tabular_q;
  if (s == "reinforce") return LearnerKind::reinforce;
  if (s == "idqn") return LearnerKind::idqn;
  throw ConfigError(fmt::format("unknown learner type '{}' (expected tabular_q, reinforce or idqn)", s));
}

ExplorationMode parse_exploration_mode(const std::string& s) {
  if (s == "boltzmann") return ExplorationMode::boltzmann;
  if (s == "epsilon_greedy") return ExplorationMode::epsilon_greedy;
  throw ConfigError(fmt::format("unknown exploration mode '{}' (expected boltzmann or epsilon_greedy)", s));
}

BaselineMode parse_baseline_mode(const std::string& s) {
  if (s == "none") return BaselineMode::none;
  if (s == "mean_return") return BaselineMode::mean_return;
  if (s == "running_mean") return BaselineMode::running_mean;
  throw ConfigError(fmt::format("unknown baseline '{}' (expected none, mean_return or running_mean)", s));
}

Agent make_agent(const LearnerSpec& spec, Index n_states, Index n_actions, Index feature_size, Rng& init_rng) {
  spec.validate();
  switch (spec.kind) {
    case LearnerKind::tabular_q:
      return TabularQAgent{make_q_table(n_states, n_actions, spec.learning_rate, spec.gamma), spec.exploration};
    case LearnerKind::reinforce: {
      ReinforceAgent a{make_policy(n_states, n_actions, spec.learning_rate, spec.gamma, spec.baseline), {}};
      a.policy.running_rate = spec.baseline_rate;
      return a;
    }
    case LearnerKind::idqn: {
      std::vector<Index> sizes{feature_size};
      sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
      sizes.push_back(n_actions);
      MlpParams online = make_mlp(sizes, init_rng);
      const Index capacity = spec.use_replay ? spec.buffer_capacity : 1;
      const Index batch = spec.use_replay ? spec.batch_size : 1;
      return DqnAgent{online,         online,           ReplayBuffer(capacity, batch, feature_size),
                      spec.exploration, spec.learning_rate, spec.gamma,
                      spec.target_sync, spec.use_replay};
    }
  }
  throw ContractViolation("unknown learner kind");
}

AgentLayout layout_of(const Agent& agent, Index projection_state, const Vector& projection_input) {
  AgentLayout l;
  l.projection_state = projection_state;
  std::visit(overloaded{[&](const TabularQAgent& a) {
                          l.kind = LearnerKind::tabular_q;
                          l.n_states = a.table.values.rows();
                          l.n_actions = a.table.values.cols();
                          l.exploration = a.exploration.mode;
                          l.temperature = a.exploration.temperature;
                        },
                        [&](const ReinforceAgent& a) {
                          l.kind = LearnerKind::reinforce;
                          l.n_states = a.policy.logits.rows();
                          l.n_actions = a.policy.logits.cols();
                          l.exploration = ExplorationMode::boltzmann;
                          l.temperature = 1.0;
                        },
                        [&](const DqnAgent& a) {
                          l.kind = LearnerKind::idqn;
                          l.n_actions = a.online.output_size();
                          l.exploration = a.exploration.mode;
                          l.temperature = a.exploration.temperature;
                          l.layer_sizes.push_back(a.online.input_size());
                          for (const auto& layer : a.online.layers) l.layer_sizes.push_back(layer.bias.size());
                          l.projection_input = projection_input;
                        }},
             agent);
  l.parameter_count = flatten_params(agent).size();
  return l;
}

Vector action_values(const Agent& agent, Index state, const Vector& features) {
  return std::visit(overloaded{[&](const TabularQAgent& a) -> Vector { return a.table.values.row(state).transpose(); },
                               [&](const ReinforceAgent& a) -> Vector { return a.policy.logits.row(state).transpose(); },
                               [&](const DqnAgent& a) -> Vector { return mlp_forward_one(a.online, features); }},
                    agent);
}

int select_action(const Agent& agent, Index state, const Vector& features, Index h, Rng& rng) {
  const Vector values = action_values(agent, state, features);
  return std::visit(
      overloaded{[&](const TabularQAgent& a) { return select_action(values, a.exploration, h, rng); },
                 [&](const ReinforceAgent&) { return sample_categorical(boltzmann_probs(values, 1.0), rng); },
                 [&](const DqnAgent& a) { return select_action(values, a.exploration, h, rng); }},
      agent);
}

void observe(Agent& agent, const Transition& t, const Vector& features, const Vector& next_features,
             bool episode_end, Rng& minibatch_rng) {
  std::visit(overloaded{[&](TabularQAgent& a) { q_update(a.table, t); },
                        [&](ReinforceAgent& a) {
                          a.episode.push_back({t.state, t.action, t.reward});
                          if (episode_end) {
                            reinforce_update(a.policy, a.episode);
                            a.episode.clear();
                          }
                        },
                        [&](DqnAgent& a) {
                          a.buffer.push(features, t.action, t.reward, next_features, t.terminal);
                          if (!a.buffer.can_sample()) return;
                          const DqnBatch batch = a.buffer.sample(minibatch_rng);
                          a.last_loss = dqn_update(a.online, a.target, batch, a.learning_rate, a.gamma);
                          ++a.updates;
                          sync_target(a.online, a.target, a.target_sync, a.updates);
                        }},
             agent);
}

Vector flatten_params(const Agent& agent) {
  return std::visit(overloaded{[](const TabularQAgent& a) { return table_row_major(a.table.values); },
                               [](const ReinforceAgent& a) { return table_row_major(a.policy.logits); },
                               [](const DqnAgent& a) { return flatten(a.online); }},
                    agent);
}

void unflatten_params(const Eigen::Ref<const Vector>& theta, Agent& agent) {
  std::visit(overloaded{[&](TabularQAgent& a) { fill_row_major(theta, a.table.values); },
                        [&](ReinforceAgent& a) { fill_row_major(theta, a.policy.logits); },
                        [&](DqnAgent& a) { unflatten(theta, a.online); }},
             agent);
}

}  // namespace marl_dyn
