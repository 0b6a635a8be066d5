#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/game_env.hpp"
#include "marl_dyn/learners.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace marl_dyn {

enum class ProjectionMode { raw_params, action_prob, q_of_action0 };

std::string to_string(ProjectionMode mode);
ProjectionMode parse_projection_mode(const std::string& s);

/// Which environment to build: a named or custom matrix game, or the gridworld.
struct GameSpec {
  std::string name = "prisoners_dilemma";
  std::optional<std::array<double, 8>> payoffs;  // required when name == "custom"
  GridworldGame gridworld;                       // used when name == "gridworld"
};

Game make_game(const GameSpec& spec);

struct SimConfig {
  GameSpec game;
  std::array<LearnerSpec, 2> agents;
  Index n_steps = 50000;
  Index n_burn = 10000;
  Index n_runs = 16;
  std::uint64_t seed = 0;
  Index record_stride = 10;
  ProjectionMode projection = ProjectionMode::raw_params;
  /// Matrix games are one-shot episodes; when set, TD targets still bootstrap into the next round.
  bool repeated_game_bootstrap = true;
  std::string config_hash;

  void validate() const;
};

/// Absolute parameter magnitude beyond which a run is declared diverged.
inline constexpr double kDivergenceGuard = 1e6;

struct TraceMetadata {
  std::string config_hash;
  std::uint64_t seed = 0;
  Index run_index = 0;
  ProjectionMode projection = ProjectionMode::raw_params;
  bool diverged = false;
  std::int64_t divergence_step = -1;
  std::string divergence_message;
  std::vector<AgentLayout> layouts;
};

/// Recorded joint parameter rows of one run. Row r holds theta at update step steps[r].
struct TrajectoryTrace {
  Matrix joint;                    // rows x sum(agent_dims)
  std::vector<Index> agent_dims;   // column count per agent, in agent order
  std::vector<Index> steps;        // update index h of each row
  Matrix rewards;                  // rows x n_agents, mean reward over each recording window
  TraceMetadata meta;

  Index rows() const { return joint.rows(); }
  Index agent_offset(std::size_t agent) const;
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> agent_block(std::size_t agent) const;
};

/// Seed of ensemble member `run_index`.
std::uint64_t run_seed(std::uint64_t base_seed, Index run_index);

/// Columns contributed by one agent under a projection.
Index projected_size(const AgentLayout& layout, ProjectionMode mode);

/// Projects one agent's flattened parameter vector.
Vector project_params(const AgentLayout& layout, const Eigen::Ref<const Vector>& theta, ProjectionMode mode);

/// Throws ConfigError when a projection cannot be applied to these agents in this game.
void check_projection(const Game& game, const std::array<LearnerSpec, 2>& agents, ProjectionMode mode);

/// Simulates one ensemble member. Throws DivergenceError naming the update index on blow-up.
TrajectoryTrace run_training(const SimConfig& config, Index run_index);

/// Re-projects a raw-parameter trace (raw_params is the identity).
TrajectoryTrace project_trace(const TrajectoryTrace& trace, ProjectionMode mode);

/// All ensemble members; diverged members come back flagged with no rows.
std::vector<TrajectoryTrace> run_ensemble(const SimConfig& config, std::size_t workers = 0);

/// Rows with h > n_burn from one trace.
Matrix post_burn(const TrajectoryTrace& trace, Index n_burn);

/// Union of post-burn rows across non-diverged traces, stacked in run order.
Matrix post_burn_samples(const std::vector<TrajectoryTrace>& traces, Index n_burn);

}  // namespace marl_dyn
