#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/mlp.hpp"
#include "marl_dyn/rng.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace marl_dyn {

enum class ExplorationMode { boltzmann, epsilon_greedy };

struct ExplorationSchedule {
  ExplorationMode mode = ExplorationMode::boltzmann;
  double temperature = 1.0;
  double eps_start = 0.9;
  double eps_end = 0.05;
  double decay_rate = 1e-4;  // per update step

  /// eps_end + (eps_start - eps_end) * exp(-decay_rate * h)
  double epsilon(Index h) const {
    return eps_end + (eps_start - eps_end) * std::exp(-decay_rate * static_cast<double>(h));
  }
  void validate() const;
};

/// Softmax of q / temperature with max-subtraction.
Vector boltzmann_probs(const Eigen::Ref<const Vector>& q_row, double temperature);

/// Index of the largest entry; ties go to the lowest index.
int greedy_action(const Eigen::Ref<const Vector>& q_row);

/// Inverse-CDF draw from a probability vector.
int sample_categorical(const Eigen::Ref<const Vector>& probs, Rng& rng);

/// Chooses an action from a row of action values under the schedule at update index h.
int select_action(const Eigen::Ref<const Vector>& q_row, const ExplorationSchedule& schedule, Index h, Rng& rng);

struct QTable {
  Matrix values;  // n_states x n_actions
  double learning_rate = 0.1;
  double gamma = 0.9;
};

QTable make_q_table(Index n_states, Index n_actions, double learning_rate, double gamma);

/// Watkins Q-learning: Q(s,a) += alpha * (r + gamma * max_b Q(s',b) [not terminal] - Q(s,a)).
void q_update(QTable& table, const Transition& t);

enum class BaselineMode { none, mean_return, running_mean };

struct PolicyLogits {
  Matrix logits;  // n_states x n_actions
  double learning_rate = 0.01;
  double gamma = 0.9;
  BaselineMode baseline = BaselineMode::none;
  double running_baseline = 0.0;
  double running_rate = 0.01;
};

struct EpisodeStep {
  Index state = 0;
  int action = 0;
  double reward = 0.0;
};

PolicyLogits make_policy(Index n_states, Index n_actions, double learning_rate, double gamma, BaselineMode baseline);

/// Softmax policy gradient over one episode, evaluated at the pre-episode logits:
/// logits[s_t] += lr * (G_t - b) * (onehot(a_t) - softmax(logits[s_t])).
void reinforce_update(PolicyLogits& policy, const std::vector<EpisodeStep>& episode);

/// Gradient of log softmax(logits)[action] with respect to the logits.
Vector log_softmax_gradient(const Eigen::Ref<const Vector>& logits, int action);

/// Fixed-capacity ring of transitions with network inputs stored as feature columns.
class ReplayBuffer {
 public:
  ReplayBuffer(Index capacity, Index batch_size, Index feature_size);

  void push(const Eigen::Ref<const Vector>& state, int action, double reward,
            const Eigen::Ref<const Vector>& next_state, bool terminal);
  Index size() const noexcept { return size_; }
  Index capacity() const noexcept { return capacity_; }
  Index batch_size() const noexcept { return batch_size_; }
  bool can_sample() const noexcept { return size_ >= batch_size_; }

  /// Uniform sample of batch_size distinct stored transitions.
  DqnBatch sample(Rng& rng) const;

 private:
  Index capacity_;
  Index batch_size_;
  Index head_ = 0;
  Index size_ = 0;
  Matrix states_;
  Matrix next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<bool> terminal_;
};

enum class LearnerKind { tabular_q, reinforce, idqn };

/// Everything needed to build one learner; mirrors the "agents" entries of the run config.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::tabular_q;
  double learning_rate = 0.1;
  double gamma = 0.9;
  ExplorationSchedule exploration;
  BaselineMode baseline = BaselineMode::none;
  double baseline_rate = 0.01;
  std::vector<Index> hidden{32, 32};
  Index buffer_capacity = 10000;
  Index batch_size = 32;
  Index target_sync = 100;
  bool use_replay = true;

  void validate() const;
};

std::string to_string(LearnerKind kind);
std::string to_string(ExplorationMode mode);
std::string to_string(BaselineMode mode);
LearnerKind parse_learner_kind(const std::string& s);
ExplorationMode parse_exploration_mode(const std::string& s);
BaselineMode parse_baseline_mode(const std::string& s);

struct TabularQAgent {
  QTable table;
  ExplorationSchedule exploration;
};

struct ReinforceAgent {
  PolicyLogits policy;
  std::vector<EpisodeStep> episode;
};

struct DqnAgent {
  MlpParams online;
  MlpParams target;
  ReplayBuffer buffer;
  ExplorationSchedule exploration;
  double learning_rate = 1e-3;
  double gamma = 0.9;
  Index target_sync = 100;
  bool use_replay = true;
  Index updates = 0;
  double last_loss = 0.0;
};

using Agent = std::variant<TabularQAgent, ReinforceAgent, DqnAgent>;

/// Static description of an agent's parameter vector, enough to project a flattened row.
struct AgentLayout {
  LearnerKind kind = LearnerKind::tabular_q;
  Index n_states = 1;
  Index n_actions = 2;
  ExplorationMode exploration = ExplorationMode::boltzmann;
  double temperature = 1.0;
  std::vector<Index> layer_sizes;  // idqn only
  Index projection_state = 0;      // state used by scalar projections
  Vector projection_input;         // network input for projection_state (idqn only)
  Index parameter_count = 0;
};

/// Builds an agent; network weights come from `init_rng`.
Agent make_agent(const LearnerSpec& spec, Index n_states, Index n_actions, Index feature_size, Rng& init_rng);

AgentLayout layout_of(const Agent& agent, Index projection_state, const Vector& projection_input);

/// Action values (or logits) the agent acts on in `state`.
Vector action_values(const Agent& agent, Index state, const Vector& features);

int select_action(const Agent& agent, Index state, const Vector& features, Index h, Rng& rng);

/// Feeds one environment transition to the agent and runs whatever update its cadence calls for.
/// `episode_end` closes a REINFORCE episode; `t.terminal` is the flag used in TD targets.
void observe(Agent& agent, const Transition& t, const Vector& features, const Vector& next_features,
             bool episode_end, Rng& minibatch_rng);

/// Order-stable flattening: tables row-major (state-major), networks via flatten(MlpParams).
Vector flatten_params(const Agent& agent);

/// Inverse of flatten_params for the same agent type and shape.
void unflatten_params(const Eigen::Ref<const Vector>& theta, Agent& agent);

}  // namespace marl_dyn
