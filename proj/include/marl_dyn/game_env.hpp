#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/rng.hpp"

#include <array>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace marl_dyn {

struct StateId {
  Index index = 0;
  friend bool operator==(StateId, StateId) = default;
};

using JointAction = std::array<int, 2>;
using Rewards = std::array<double, 2>;

/// Two-player, two-action normal-form game. Agent 0 is the row player.
struct MatrixGame {
  std::string name;
  /// payoffs[i](a1, a2): reward to agent i when agent 0 plays a1 and agent 1 plays a2.
  std::array<Eigen::Matrix2d, 2> payoffs;
  bool zero_sum = false;
  std::array<std::string, 2> action_labels;
};

struct GridCell {
  int x = 0;
  int y = 0;
  friend bool operator==(GridCell, GridCell) = default;
};

/// Small cooperative gridworld: both agents must stand on distinct goal cells at once.
struct GridworldGame {
  int width = 5;
  int height = 5;
  std::array<GridCell, 2> start_positions{GridCell{0, 0}, GridCell{4, 4}};
  std::array<GridCell, 2> goal_cells{GridCell{4, 0}, GridCell{0, 4}};
  int max_episode_steps = 50;
  double step_penalty = -0.01;
  double joint_goal_reward = 1.0;

  /// Actions: 0 stay, 1 up (y-1), 2 down (y+1), 3 left (x-1), 4 right (x+1).
  static constexpr int n_actions = 5;
};

using Game = std::variant<MatrixGame, GridworldGame>;

struct StepResult {
  StateId next;
  Rewards rewards{};
  bool terminal = false;
};

/// Names accepted by make_matrix_game.
inline constexpr std::array<std::string_view, 4> kMatrixGameNames{"prisoners_dilemma", "matching_pennies",
                                                                  "stag_hunt", "chicken"};

MatrixGame make_matrix_game(std::string_view name);

/// Builds a custom game from eight reals in row-major order: (r0, r1) for (0,0), (0,1), (1,0), (1,1).
MatrixGame make_custom_game(const std::array<double, 8>& entries, std::string name = "custom");

void validate(const MatrixGame& game);
void validate(const GridworldGame& game);

int n_agents(const Game& game);
int n_actions(const Game& game);
Index n_states(const Game& game);
StateId initial_state(const Game& game);
bool is_stateless(const Game& game);
std::string game_name(const Game& game);

/// Gridworld state <-> agent positions.
StateId encode_positions(const GridworldGame& game, const std::array<GridCell, 2>& positions);
std::array<GridCell, 2> decode_positions(const GridworldGame& game, StateId state);

/// Network input for a state: one-hot for matrix games, per-coordinate one-hot for the gridworld.
Vector state_features(const Game& game, StateId state);
Index feature_size(const Game& game);

/// Environment transition. Matrix games are terminal after every step and
/// consume no randomness; `rng` is the (currently unused) transition-noise hook.
StepResult step(const Game& game, StateId state, const JointAction& actions, Rng& rng);
StepResult step(const MatrixGame& game, StateId state, const JointAction& actions);
StepResult step(const GridworldGame& game, StateId state, const JointAction& actions);

}  // namespace marl_dyn
