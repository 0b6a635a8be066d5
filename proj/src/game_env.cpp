#include "marl_dyn/game_env.hpp"

#include <cmath>
#include <fmt/format.h>

namespace marl_dyn {

namespace {

MatrixGame table(std::string name, std::array<std::string, 2> labels, std::array<double, 8> entries) {
  MatrixGame g = make_custom_game(entries, std::move(name));
  g.action_labels = std::move(labels);
  return g;
}

void check_action(int a, int n) {
  if (a < 0 || a >= n) throw ContractViolation(fmt::format("action {} out of range [0, {})", a, n));
}

bool in_bounds(const GridworldGame& g, GridCell c) { return c.x >= 0 && c.x < g.width && c.y >= 0 && c.y < g.height; }

GridCell move(const GridworldGame& g, GridCell c, int action) {
  GridCell n = c;
  switch (action) {
    case 1: --n.y; break;
    case 2: ++n.y; break;
    case 3: --n.x; break;
    case 4: ++n.x; break;
    default: break;
  }
  return in_bounds(g, n) ? n : c;
}

bool on_goal(const GridworldGame& g, GridCell c) { return c == g.goal_cells[0] || c == g.goal_cells[1]; }

}  // namespace

MatrixGame make_custom_game(const std::array<double, 8>& e, std::string name) {
  MatrixGame g;
  g.name = std::move(name);
  g.payoffs[0] << e[0], e[2], e[4], e[6];
  g.payoffs[1] << e[1], e[3], e[5], e[7];
  g.zero_sum = (g.payoffs[0] + g.payoffs[1]).isZero(0.0);
  g.action_labels = {"0", "1"};
  validate(g);
  return g;
}

MatrixGame make_matrix_game(std::string_view name) {
  if (name == "prisoners_dilemma") return table("prisoners_dilemma", {"C", "D"}, {1, 1, 5, 0, 0, 5, 3, 3});
  if (name == "matching_pennies") return table("matching_pennies", {"H", "T"}, {1, -1, -1, 1, -1, 1, 1, -1});
  if (name == "stag_hunt") return table("stag_hunt", {"S", "H"}, {4, 4, 0, 0, 0, 0, 3, 3});
  if (name == "chicken") return table("chicken", {"A", "B"}, {-1, -1, 4, 0, 0, 4, 2, 2});
  throw ConfigError(fmt::format("unknown game '{}'", name));
}

void validate(const MatrixGame& g) {
  for (const auto& p : g.payoffs)
    if (!p.allFinite()) throw ConfigError("game payoffs must be finite");
  if (g.zero_sum && !(g.payoffs[0] + g.payoffs[1]).isZero(0.0))
    throw ConfigError("zero-sum flag set but payoffs do not sum to zero");
}

void validate(const GridworldGame& g) {
  if (g.width < 2 || g.height < 2) throw ConfigError("gridworld width and height must be >= 2");
  for (auto c : g.start_positions)
    if (!in_bounds(g, c)) throw ConfigError("gridworld start position out of bounds");
  for (auto c : g.goal_cells)
    if (!in_bounds(g, c)) throw ConfigError("gridworld goal cell out of bounds");
  if (g.start_positions[0] == g.start_positions[1]) throw ConfigError("gridworld start positions must differ");
  if (g.goal_cells[0] == g.goal_cells[1]) throw ConfigError("gridworld goal cells must differ");
  if (g.max_episode_steps < 1) throw ConfigError("gridworld max_episode_steps must be >= 1");
  if (!std::isfinite(g.step_penalty) || !std::isfinite(g.joint_goal_reward))
    throw ConfigError("gridworld rewards must be finite");
}

int n_agents(const Game&) { return 2; }

int n_actions(const Game& game) {
  return std::holds_alternative<MatrixGame>(game) ? 2 : GridworldGame::n_actions;
}

Index n_states(const Game& game) {
  if (const auto* g = std::get_if<GridworldGame>(&game)) {
    const Index cells = Index{g->width} * g->height;
    return cells * cells;
  }
  return 1;
}

StateId initial_state(const Game& game) {
  if (const auto* g = std::get_if<GridworldGame>(&game)) return encode_positions(*g, g->start_positions);
  return StateId{0};
}

bool is_stateless(const Game& game) { return std::holds_alternative<MatrixGame>(game); }

std::string game_name(const Game& game) {
  if (const auto* g = std::get_if<MatrixGame>(&game)) return g->name;
  return "gridworld";
}

StateId encode_positions(const GridworldGame& g, const std::array<GridCell, 2>& p) {
  const Index cells = Index{g.width} * g.height;
  auto cell = [&](GridCell c) { return Index{c.y} * g.width + c.x; };
  return StateId{cell(p[0]) * cells + cell(p[1])};
}

std::array<GridCell, 2> decode_positions(const GridworldGame& g, StateId state) {
  const Index cells = Index{g.width} * g.height;
  if (state.index < 0 || state.index >= cells * cells) throw ContractViolation("gridworld state out of range");
  auto cell = [&](Index k) { return GridCell{static_cast<int>(k % g.width), static_cast<int>(k / g.width)}; };
  return {cell(state.index / cells), cell(state.index % cells)};
}

Index feature_size(const Game& game) {
  if (const auto* g = std::get_if<GridworldGame>(&game)) return 2 * (Index{g->width} + g->height);
  return 1;
}

Vector state_features(const Game& game, StateId state) {
  Vector f = Vector::Zero(feature_size(game));
  if (const auto* g = std::get_if<GridworldGame>(&game)) {
    const auto pos = decode_positions(*g, state);
    const Index block = Index{g->width} + g->height;
    for (int i = 0; i < 2; ++i) {
      f(i * block + pos[i].x) = 1.0;
      f(i * block + g->width + pos[i].y) = 1.0;
    }
  } else {
    if (state.index != 0) throw ContractViolation("matrix games have a single state 0");
    f(0) = 1.0;
  }
  return f;
}

StepResult step(const MatrixGame& game, StateId state, const JointAction& a) {
  if (state.index != 0) throw ContractViolation("matrix games have a single state 0");
  check_action(a[0], 2);
  check_action(a[1], 2);
  return StepResult{StateId{0}, {game.payoffs[0](a[0], a[1]), game.payoffs[1](a[0], a[1])}, true};
}

StepResult step(const GridworldGame& game, StateId state, const JointAction& a) {
  check_action(a[0], GridworldGame::n_actions);
  check_action(a[1], GridworldGame::n_actions);
  const auto cur = decode_positions(game, state);
  std::array<GridCell, 2> next{move(game, cur[0], a[0]), move(game, cur[1], a[1])};
  const bool same_cell = next[0] == next[1];
  const bool swap = next[0] == cur[1] && next[1] == cur[0];
  if (same_cell || swap) next = cur;
  const bool joint_goal = on_goal(game, next[0]) && on_goal(game, next[1]) && !(next[0] == next[1]);
  const double r = joint_goal ? game.joint_goal_reward : game.step_penalty;
  return StepResult{encode_positions(game, next), {r, r}, joint_goal};
}

StepResult step(const Game& game, StateId state, const JointAction& actions, Rng& /*rng*/) {
  return std::visit([&](const auto& g) { return step(g, state, actions); }, game);
}

}  // namespace marl_dyn
