#include "marl_dyn/learners.hpp"
#include "marl_dyn/mlp.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace marl_dyn;

namespace {

DqnBatch random_batch(Index in, Index n, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  DqnBatch b;
  b.states = Matrix(in, n);
  b.next_states = Matrix(in, n);
  b.rewards = Vector(n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < in; ++i) {
      b.states(i, j) = z(rng);
      b.next_states(i, j) = z(rng);
    }
    b.rewards(j) = z(rng);
    b.actions.push_back(static_cast<int>(j % 2));
    b.terminal.push_back(j % 3 == 0);
  }
  return b;
}

}  // namespace

TEST_CASE("boltzmann probabilities") {
  Vector q(2);
  q << std::log(3.0), 0.0;
  const Vector p = boltzmann_probs(q, 1.0);
  CHECK(p(0) == doctest::Approx(0.75));
  CHECK(p(1) == doctest::Approx(0.25));
  // max-subtraction keeps large values finite
  q << 1000.0, 999.0;
  CHECK(boltzmann_probs(q, 1.0).allFinite());
  CHECK(boltzmann_probs(q, 1e6)(0) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK_THROWS_AS(boltzmann_probs(q, 0.0), ContractViolation);
}

TEST_CASE("greedy ties go to the lowest index") {
  Vector q(3);
  q << 1.0, 2.0, 2.0;
  CHECK(greedy_action(q) == 1);
  q.setZero();
  CHECK(greedy_action(q) == 0);
}

TEST_CASE("categorical sampling matches its probabilities within 5 sigma") {
  Vector p(3);
  p << 0.2, 0.5, 0.3;
  Rng rng(42);
  const int n = 100000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[sample_categorical(p, rng)];
  for (int a = 0; a < 3; ++a) {
    const double sd = std::sqrt(n * p(a) * (1 - p(a)));
    CHECK(std::abs(counts[a] - n * p(a)) < 5 * sd);
  }
}

TEST_CASE("epsilon schedule") {
  ExplorationSchedule s;
  s.mode = ExplorationMode::epsilon_greedy;
  s.eps_start = 0.9;
  s.eps_end = 0.1;
  s.decay_rate = 0.01;
  CHECK(s.epsilon(0) == doctest::Approx(0.9));
  CHECK(s.epsilon(100) == doctest::Approx(0.1 + 0.8 * std::exp(-1.0)));
  CHECK(s.epsilon(100000) == doctest::Approx(0.1));

  // with eps = 0 the choice is greedy and consumes no uniform draw decisions
  s.eps_start = 0.0;
  s.eps_end = 0.0;
  Vector q(2);
  q << 0.0, 1.0;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK(select_action(q, s, i, rng) == 1);

  s.eps_end = 0.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("Q-learning update") {
  QTable t = make_q_table(2, 2, 0.1, 0.9);
  t.values(1, 0) = 2.0;
  q_update(t, Transition{0, 1, 1.0, 1, false});
  CHECK(t.values(0, 1) == doctest::Approx(0.1 * (1.0 + 0.9 * 2.0)));
  q_update(t, Transition{0, 0, 1.0, 1, true});
  CHECK(t.values(0, 0) == doctest::Approx(0.1));
  CHECK_THROWS_AS(q_update(t, Transition{0, 2, 1.0, 1, true}), ContractViolation);
}

TEST_CASE("REINFORCE single-step update") {
  PolicyLogits p = make_policy(1, 2, 0.1, 0.9, BaselineMode::none);
  reinforce_update(p, {EpisodeStep{0, 0, 1.0}});
  CHECK(p.logits(0, 0) == doctest::Approx(0.05));
  CHECK(p.logits(0, 1) == doctest::Approx(-0.05));

  // mean_return in a one-step episode cancels the return exactly
  PolicyLogits m = make_policy(1, 2, 0.1, 0.9, BaselineMode::mean_return);
  reinforce_update(m, {EpisodeStep{0, 0, 1.0}});
  CHECK(m.logits.isZero(0.0));
}

TEST_CASE("REINFORCE discounted returns over an episode") {
  PolicyLogits p = make_policy(2, 2, 1.0, 0.5, BaselineMode::none);
  reinforce_update(p, {EpisodeStep{0, 1, 0.0}, EpisodeStep{1, 0, 2.0}});
  // G_0 = 0 + 0.5 * 2 = 1, G_1 = 2, both at uniform logits
  CHECK(p.logits(0, 1) == doctest::Approx(0.5));
  CHECK(p.logits(0, 0) == doctest::Approx(-0.5));
  CHECK(p.logits(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("log-softmax gradient matches finite differences") {
  Vector l(3);
  l << 0.3, -1.2, 0.8;
  const Vector g = log_softmax_gradient(l, 2);
  const double h = 1e-6;
  for (Index i = 0; i < 3; ++i) {
    Vector a = l, b = l;
    a(i) += h;
    b(i) -= h;
    const double fd = (std::log(boltzmann_probs(a, 1.0)(2)) - std::log(boltzmann_probs(b, 1.0)(2))) / (2 * h);
    CHECK(g(i) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("MLP flatten round-trips and keeps layer order") {
  Rng rng(7);
  const std::vector<Index> sizes{3, 4, 2};
  MlpParams p = make_mlp(sizes, rng);
  CHECK(p.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  const Vector theta = flatten(p);
  CHECK(theta.size() == p.parameter_count());
  CHECK(theta(1) == p.layers[0].weights(1, 0));  // column-major weights first
  CHECK(theta(12) == p.layers[0].bias(0));
  MlpParams q = zero_mlp(sizes);
  unflatten(theta, q);
  CHECK(flatten(q) == theta);
  CHECK_THROWS_AS(unflatten(theta.head(5), q), ContractViolation);
}

TEST_CASE("MLP forward on a batch equals per-column forward") {
  Rng rng(3);
  const std::vector<Index> sizes{4, 8, 8, 3};
  const MlpParams p = make_mlp(sizes, rng);
  Matrix x = Matrix::Random(4, 5);
  const Matrix y = mlp_forward(p, x);
  for (Index j = 0; j < 5; ++j) CHECK((mlp_forward_one(p, x.col(j)) - y.col(j)).norm() < 1e-12);

  // hand-computed two-layer network
  MlpParams h = zero_mlp(std::vector<Index>{1, 2, 1});
  h.layers[0].weights << 1.0, -1.0;
  h.layers[0].bias << 0.0, 0.5;
  h.layers[1].weights << 2.0, 3.0;
  h.layers[1].bias << 0.25;
  Vector in(1);
  in << 1.0;
  // hidden = relu([1, -0.5]) = [1, 0]
  CHECK(mlp_forward_one(h, in)(0) == doctest::Approx(2.25));
}

TEST_CASE("TD-loss gradient matches central finite differences") {
  Rng rng(11);
  const std::vector<Index> sizes{3, 5, 4, 2};
  const MlpParams online = make_mlp(sizes, rng);
  const MlpParams target = make_mlp(sizes, rng);
  const DqnBatch batch = random_batch(3, 6, rng);
  const double gamma = 0.9;

  const DqnGradient g = dqn_gradient(online, target, batch, gamma);
  CHECK(g.loss == doctest::Approx(dqn_loss(online, target, batch, gamma)));
  MlpParams grad_params = zero_mlp(sizes);
  grad_params.layers = g.layers;
  const Vector analytic = flatten(grad_params);

  const Vector theta = flatten(online);
  MlpParams probe = zero_mlp(sizes);
  const double h = 1e-6;
  double max_rel = 0.0;
  for (Index k = 0; k < theta.size(); ++k) {
    Vector a = theta, b = theta;
    a(k) += h;
    b(k) -= h;
    unflatten(a, probe);
    const double la = dqn_loss(probe, target, batch, gamma);
    unflatten(b, probe);
    const double lb = dqn_loss(probe, target, batch, gamma);
    const double fd = (la - lb) / (2 * h);
    max_rel = std::max(max_rel, std::abs(fd - analytic(k)) / std::max(1e-4, std::abs(fd) + std::abs(analytic(k))));
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("a gradient step lowers the TD loss and target sync copies") {
  Rng rng(5);
  const std::vector<Index> sizes{2, 6, 2};
  MlpParams online = make_mlp(sizes, rng);
  MlpParams target = make_mlp(sizes, rng);
  const DqnBatch batch = random_batch(2, 8, rng);
  const double before = dqn_loss(online, target, batch, 0.9);
  dqn_update(online, target, batch, 1e-3, 0.9);
  CHECK(dqn_loss(online, target, batch, 0.9) < before);

  CHECK_FALSE(sync_target(online, target, 100, 150));
  CHECK(sync_target(online, target, 100, 200));
  CHECK(flatten(target) == flatten(online));
}

TEST_CASE("replay buffer is a bounded ring with distinct samples") {
  ReplayBuffer buf(5, 3, 1);
  Vector s(1);
  for (int i = 0; i < 8; ++i) {
    s(0) = i;
    buf.push(s, 0, static_cast<double>(i), s, false);
  }
  CHECK(buf.size() == 5);
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const DqnBatch b = buf.sample(rng);
    REQUIRE(b.size() == 3);
    std::set<double> seen;
    for (Index j = 0; j < 3; ++j) {
      CHECK(b.rewards(j) >= 3.0);  // oldest three were overwritten
      CHECK(b.states(0, j) == b.rewards(j));
      seen.insert(b.rewards(j));
    }
    CHECK(seen.size() == 3);
  }
}

TEST_CASE("agent parameter flattening round-trips for every learner") {
  Rng rng(9);
  for (LearnerKind kind : {LearnerKind::tabular_q, LearnerKind::reinforce, LearnerKind::idqn}) {
    LearnerSpec spec;
    spec.kind = kind;
    spec.hidden = {4};
    Agent a = make_agent(spec, 3, 2, 3, rng);
    Vector theta = flatten_params(a);
    theta.setLinSpaced(theta.size(), -1.0, 1.0);
    unflatten_params(theta, a);
    CHECK(flatten_params(a) == theta);
    const AgentLayout layout = layout_of(a, 0, Vector::Unit(3, 0));
    CHECK(layout.parameter_count == theta.size());
  }
}

TEST_CASE("tabular table flattening is state-major") {
  Rng rng(1);
  LearnerSpec spec;
  Agent a = make_agent(spec, 2, 3, 1, rng);
  std::get<TabularQAgent>(a).table.values << 1, 2, 3, 4, 5, 6;
  Vector expected(6);
  expected << 1, 2, 3, 4, 5, 6;
  CHECK(flatten_params(a) == expected);
}
