#include "marl_dyn/game_env.hpp"

#include <doctest.h>

#include <cmath>

using namespace marl_dyn;

TEST_CASE("matrix game payoff tables") {
  const MatrixGame pd = make_matrix_game("prisoners_dilemma");
  // action 0 defects
  CHECK(pd.payoffs[0](0, 0) == 1);
  CHECK(pd.payoffs[0](0, 1) == 5);
  CHECK(pd.payoffs[1](0, 1) == 0);
  CHECK(pd.payoffs[0](1, 1) == 3);

  const MatrixGame mp = make_matrix_game("matching_pennies");
  CHECK(mp.zero_sum);
  CHECK((mp.payoffs[0] + mp.payoffs[1]).isZero(0.0));
  CHECK(mp.payoffs[0](0, 0) == 1);
  CHECK(mp.payoffs[0](0, 1) == -1);

  const MatrixGame sh = make_matrix_game("stag_hunt");
  CHECK(sh.payoffs[0](0, 0) == 4);
  CHECK(sh.payoffs[1](1, 1) == 3);
  CHECK(sh.payoffs[0](0, 1) == 0);

  const MatrixGame ch = make_matrix_game("chicken");
  CHECK(ch.payoffs[0](0, 0) == -1);
  CHECK(ch.payoffs[0](0, 1) == 4);
  CHECK(ch.payoffs[1](0, 1) == 0);
  CHECK(ch.payoffs[1](1, 1) == 2);

  CHECK_THROWS_AS(make_matrix_game("rock_paper_scissors"), ConfigError);
}

TEST_CASE("custom game entries are row-major (r0, r1) pairs") {
  const MatrixGame g = make_custom_game({1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(g.payoffs[0](0, 0) == 1);
  CHECK(g.payoffs[1](0, 0) == 2);
  CHECK(g.payoffs[0](0, 1) == 3);
  CHECK(g.payoffs[1](1, 0) == 6);
  CHECK(g.payoffs[0](1, 1) == 7);
  CHECK_FALSE(g.zero_sum);
  CHECK_THROWS_AS(make_custom_game({1, 2, 3, 4, 5, 6, 7, std::nan("")}), ConfigError);
}

TEST_CASE("matrix game step") {
  const MatrixGame pd = make_matrix_game("prisoners_dilemma");
  const StepResult r = step(pd, StateId{0}, {0, 1});
  CHECK(r.terminal);
  CHECK(r.next == StateId{0});
  CHECK(r.rewards[0] == 5);
  CHECK(r.rewards[1] == 0);
  CHECK_THROWS_AS(step(pd, StateId{0}, {2, 0}), ContractViolation);
  CHECK_THROWS_AS(step(pd, StateId{1}, {0, 0}), ContractViolation);

  const Game g = pd;
  CHECK(n_states(g) == 1);
  CHECK(n_actions(g) == 2);
  CHECK(is_stateless(g));
  CHECK(state_features(g, StateId{0}) == Vector::Ones(1));
}

TEST_CASE("gridworld encoding round-trips") {
  GridworldGame gw;
  const Game g = gw;
  CHECK(n_states(g) == 625);
  CHECK(feature_size(g) == 20);
  for (Index s = 0; s < n_states(g); ++s) {
    const auto pos = decode_positions(gw, StateId{s});
    CHECK(encode_positions(gw, pos) == StateId{s});
    const Vector f = state_features(g, StateId{s});
    CHECK(f.sum() == 4.0);
  }
  CHECK_THROWS_AS(decode_positions(gw, StateId{625}), ContractViolation);
}

TEST_CASE("gridworld moves, collisions and the joint goal") {
  GridworldGame gw;
  const StateId s0 = initial_state(Game{gw});
  CHECK(decode_positions(gw, s0)[0] == GridCell{0, 0});

  // walls: agent 0 at (0,0) moving up or left stays put
  StepResult r = step(gw, s0, {1, 0});
  CHECK(decode_positions(gw, r.next)[0] == GridCell{0, 0});
  CHECK(r.rewards[0] == doctest::Approx(gw.step_penalty));
  CHECK_FALSE(r.terminal);

  r = step(gw, s0, {4, 3});
  CHECK(decode_positions(gw, r.next)[0] == GridCell{1, 0});
  CHECK(decode_positions(gw, r.next)[1] == GridCell{3, 4});

  // both try to enter the same cell: neither moves
  const StateId close = encode_positions(gw, {GridCell{1, 1}, GridCell{3, 1}});
  r = step(gw, close, {4, 3});
  CHECK(r.next == close);

  // swapping cells is blocked
  const StateId adj = encode_positions(gw, {GridCell{1, 1}, GridCell{2, 1}});
  r = step(gw, adj, {4, 3});
  CHECK(r.next == adj);

  const StateId near = encode_positions(gw, {GridCell{3, 0}, GridCell{0, 3}});
  r = step(gw, near, {4, 2});
  CHECK(r.terminal);
  CHECK(r.rewards[0] == gw.joint_goal_reward);
  CHECK(r.rewards[1] == gw.joint_goal_reward);
}

TEST_CASE("gridworld validation") {
  GridworldGame gw;
  gw.goal_cells[1] = gw.goal_cells[0];
  CHECK_THROWS_AS(validate(gw), ConfigError);
  GridworldGame out;
  out.start_positions[0] = GridCell{7, 0};
  CHECK_THROWS_AS(validate(out), ConfigError);
}
