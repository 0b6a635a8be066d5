#include "marl_dyn/coupled_sim.hpp"

#include <doctest.h>

using namespace marl_dyn;

namespace {

SimConfig tabular_config(const std::string& game, double lr, Index n_steps) {
  SimConfig c;
  c.game.name = game;
  for (auto& a : c.agents) {
    a.kind = LearnerKind::tabular_q;
    a.learning_rate = lr;
    a.exploration.mode = ExplorationMode::boltzmann;
    a.exploration.temperature = 1.0;
  }
  c.n_steps = n_steps;
  c.n_burn = n_steps / 5;
  c.n_runs = 3;
  c.seed = 123;
  c.record_stride = 10;
  c.projection = ProjectionMode::action_prob;
  return c;
}

SimConfig idqn_config(Index n_steps) {
  SimConfig c;
  c.game.name = "matching_pennies";
  for (auto& a : c.agents) {
    a.kind = LearnerKind::idqn;
    a.learning_rate = 1e-3;
    a.hidden = {8};
    a.batch_size = 8;
    a.buffer_capacity = 200;
    a.exploration.mode = ExplorationMode::epsilon_greedy;
  }
  c.n_steps = n_steps;
  c.n_burn = 100;
  c.n_runs = 2;
  c.seed = 9;
  c.record_stride = 5;
  c.projection = ProjectionMode::raw_params;
  return c;
}

}  // namespace

TEST_CASE("PD tabular Boltzmann agents learn to play action 0") {
  SimConfig c = tabular_config("prisoners_dilemma", 1e-3, 50000);
  c.n_runs = 1;
  const TrajectoryTrace t = run_training(c, 0);
  REQUIRE(t.rows() == 5000);
  CHECK(t.joint(t.rows() - 1, 0) > 0.9);
  CHECK(t.joint(t.rows() - 1, 1) > 0.9);
}

TEST_CASE("trace layout and recording cadence") {
  const SimConfig c = tabular_config("stag_hunt", 0.01, 1000);
  const TrajectoryTrace t = run_training(c, 0);
  CHECK(t.rows() == 100);
  CHECK(t.agent_dims == std::vector<Index>{1, 1});
  CHECK(t.steps.front() == 10);
  CHECK(t.steps.back() == 1000);
  CHECK(t.rewards.rows() == 100);
  CHECK(((t.joint.array() >= 0.0) && (t.joint.array() <= 1.0)).all());
  CHECK(post_burn(t, c.n_burn).rows() == 80);
  CHECK_THROWS_AS(post_burn(t, 1000), ConfigError);
}

TEST_CASE("runs are deterministic in (seed, run index)") {
  const SimConfig c = idqn_config(600);
  const TrajectoryTrace a = run_training(c, 1);
  const TrajectoryTrace b = run_training(c, 1);
  CHECK(a.joint == b.joint);
  CHECK(a.rewards == b.rewards);
  const TrajectoryTrace other = run_training(c, 0);
  CHECK(other.joint != a.joint);

  SimConfig reseeded = c;
  reseeded.seed = 10;
  CHECK(run_training(reseeded, 1).joint != a.joint);
}

TEST_CASE("ensemble results do not depend on the worker count") {
  const SimConfig c = idqn_config(400);
  const auto serial = run_ensemble(c, 1);
  const auto threaded = run_ensemble(c, 3);
  REQUIRE(serial.size() == threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i].joint == threaded[i].joint);
}

TEST_CASE("re-projecting a raw trace equals recording the projection") {
  SimConfig c = idqn_config(400);
  const TrajectoryTrace raw = run_training(c, 0);
  CHECK(raw.agent_dims[0] == raw.meta.layouts[0].parameter_count);
  c.projection = ProjectionMode::q_of_action0;
  const TrajectoryTrace q = run_training(c, 0);
  const TrajectoryTrace re = project_trace(raw, ProjectionMode::q_of_action0);
  CHECK((re.joint - q.joint).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(project_trace(q, ProjectionMode::raw_params), ConfigError);
}

TEST_CASE("projection compatibility is checked up front") {
  SimConfig c = idqn_config(100);
  c.projection = ProjectionMode::action_prob;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  SimConfig burn = idqn_config(100);
  burn.n_burn = 100;
  CHECK_THROWS_AS(burn.validate(), ConfigError);
}

TEST_CASE("blow-up raises a divergence error naming the update index") {
  SimConfig c = tabular_config("prisoners_dilemma", 0.01, 100);
  for (auto& a : c.agents) {
    a.kind = LearnerKind::reinforce;
    a.learning_rate = 1e7;
  }
  try {
    run_training(c, 0);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.update_index() == 1);
  }
  const auto traces = run_ensemble(c, 1);
  for (const auto& t : traces) {
    CHECK(t.meta.diverged);
    CHECK(t.meta.divergence_step == 1);
    CHECK(t.rows() == 0);
  }
  CHECK_THROWS_AS(post_burn_samples(traces, 0), ContractViolation);
}

TEST_CASE("gridworld IDQN runs with raw parameters") {
  SimConfig c;
  c.game.name = "gridworld";
  for (auto& a : c.agents) {
    a.kind = LearnerKind::idqn;
    a.hidden = {8};
    a.batch_size = 4;
    a.exploration.mode = ExplorationMode::epsilon_greedy;
  }
  c.n_steps = 300;
  c.n_burn = 100;
  c.n_runs = 1;
  c.record_stride = 50;
  const TrajectoryTrace t = run_training(c, 0);
  CHECK(t.rows() == 6);
  CHECK(t.agent_dims[0] == 20 * 8 + 8 + 8 * 5 + 5);
  CHECK(t.joint.allFinite());
}
