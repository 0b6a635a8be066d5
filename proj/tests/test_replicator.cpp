#include "marl_dyn/replicator.hpp"

#include <doctest.h>

#include <cmath>

using namespace marl_dyn;

namespace {

double mp_invariant(const ReplicatorState<double>& s) {
  return std::log(s.x) + std::log(1 - s.x) + std::log(s.y) + std::log(1 - s.y);
}

}  // namespace

TEST_CASE("vertices are exact fixed points in every named game") {
  for (auto name : kMatrixGameNames) {
    const MatrixGame g = make_matrix_game(name);
    for (double x : {0.0, 1.0})
      for (double y : {0.0, 1.0}) {
        const auto d = replicator_rhs(ReplicatorState<double>{x, y}, g);
        CHECK(d.x == 0.0);
        CHECK(d.y == 0.0);
      }
  }
}

TEST_CASE("field matches the closed form for matching pennies") {
  const MatrixGame mp = make_matrix_game("matching_pennies");
  const auto d = replicator_rhs(ReplicatorState<double>{0.3, 0.8}, mp);
  CHECK(d.x == doctest::Approx(2 * 0.3 * 0.7 * (2 * 0.8 - 1)));
  CHECK(d.y == doctest::Approx(-2 * 0.8 * 0.2 * (2 * 0.3 - 1)));
  CHECK_THROWS_AS(replicator_rhs(ReplicatorState<double>{1.2, 0.5}, mp), ContractViolation);
}

TEST_CASE("PD interior trajectories reach the dominant vertex") {
  const MatrixGame pd = make_matrix_game("prisoners_dilemma");
  for (double x0 : {0.05, 0.3, 0.7})
    for (double y0 : {0.1, 0.5, 0.95}) {
      const auto path = integrate_rk4<double>(pd, {x0, y0}, 0.01, 2000);
      const auto& end = path.back();
      CHECK(std::hypot(1 - end.x, 1 - end.y) < 1e-3);
    }
}

TEST_CASE("matching pennies orbit closes after one period and conserves its invariant") {
  const MatrixGame mp = make_matrix_game("matching_pennies");
  const ReplicatorState<double> start{0.8, 0.5};
  const double dt = 1e-3;
  const auto path = integrate_rk4<double>(mp, start, dt, 40000);
  const double v0 = mp_invariant(start);
  double max_drift = 0.0;
  for (const auto& s : path) max_drift = std::max(max_drift, std::abs(mp_invariant(s) - v0));
  CHECK(max_drift < 1e-8);

  // the orbit leaves downward; the next downward crossing of y = 0.5 with x > 0.5 closes it
  bool closed = false;
  for (std::size_t i = 100; i + 1 < path.size(); ++i) {
    const auto& a = path[i];
    const auto& b = path[i + 1];
    if (a.y > 0.5 && b.y <= 0.5 && a.x > 0.5) {
      const double f = (0.5 - a.y) / (b.y - a.y);
      const double x = a.x + f * (b.x - a.x);
      CHECK(std::abs(x - start.x) < 1e-3);
      closed = true;
      break;
    }
  }
  CHECK(closed);
}

TEST_CASE("stag hunt and chicken flow toward their pure equilibria") {
  const auto sh = integrate_rk4<double>(make_matrix_game("stag_hunt"), {0.9, 0.9}, 0.01, 3000);
  CHECK(sh.back().x > 0.999);
  CHECK(sh.back().y > 0.999);
  const auto ch = integrate_rk4<double>(make_matrix_game("chicken"), {0.8, 0.3}, 0.01, 3000);
  CHECK(ch.back().x > 0.999);
  CHECK(ch.back().y < 0.001);
}

TEST_CASE("vector field grid") {
  const auto grid = vector_field<double>(make_matrix_game("chicken"), 5);
  REQUIRE(grid.samples.size() == 25);
  CHECK(grid.samples[0].x == 0.0);
  CHECK(grid.samples[4].x == 1.0);
  CHECK(grid.samples[5].y == 0.25);
  CHECK(grid.samples[24].dx == 0.0);
  CHECK_THROWS_AS(vector_field<double>(make_matrix_game("chicken"), 1), ContractViolation);

  const auto single = integrate_rk4<float>(make_matrix_game("stag_hunt"), {0.5f, 0.5f}, 0.01f, 10);
  CHECK(single.size() == 11);
}
