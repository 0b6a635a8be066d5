#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/game_env.hpp"

#include <algorithm>
#include <vector>

namespace marl_dyn {

/// Share of action 0 in each agent's population.
template <typename Scalar>
struct ReplicatorState {
  Scalar x{};  // agent 0
  Scalar y{};  // agent 1
};

template <typename Scalar>
struct FieldSample {
  Scalar x, y, dx, dy;
};

template <typename Scalar>
struct VectorFieldGrid {
  Index resolution = 0;
  std::vector<FieldSample<Scalar>> samples;  // row-major in y, then x
};

/// Two-action replicator field: dx = x(1-x)(f0 - f1) with f_a the expected payoff of
/// action a against the opponent's mixture, and symmetrically for y.
template <typename Scalar>
ReplicatorState<Scalar> replicator_rhs(const ReplicatorState<Scalar>& s, const MatrixGame& game) {
  if (!(s.x >= Scalar(0) && s.x <= Scalar(1) && s.y >= Scalar(0) && s.y <= Scalar(1)))
    throw ContractViolation("replicator state must lie in [0,1]^2");
  const auto& A = game.payoffs[0];
  const auto& B = game.payoffs[1];
  const Scalar f0 = Scalar(A(0, 0)) * s.y + Scalar(A(0, 1)) * (Scalar(1) - s.y);
  const Scalar f1 = Scalar(A(1, 0)) * s.y + Scalar(A(1, 1)) * (Scalar(1) - s.y);
  const Scalar g0 = Scalar(B(0, 0)) * s.x + Scalar(B(1, 0)) * (Scalar(1) - s.x);
  const Scalar g1 = Scalar(B(0, 1)) * s.x + Scalar(B(1, 1)) * (Scalar(1) - s.x);
  return {s.x * (Scalar(1) - s.x) * (f0 - f1), s.y * (Scalar(1) - s.y) * (g0 - g1)};
}

/// Classical RK4; coordinates are clamped to [0,1] after each step to absorb roundoff.
/// Returns n_steps + 1 states including the initial one.
template <typename Scalar>
std::vector<ReplicatorState<Scalar>> integrate_rk4(const MatrixGame& game, ReplicatorState<Scalar> s, Scalar dt,
                                                   Index n_steps) {
  require(dt > Scalar(0), "dt must be positive");
  require(n_steps >= 0, "n_steps must be non-negative");
  auto clamp = [](Scalar v) { return std::clamp(v, Scalar(0), Scalar(1)); };
  auto shift = [&](const ReplicatorState<Scalar>& b, const ReplicatorState<Scalar>& k, Scalar h) {
    return ReplicatorState<Scalar>{clamp(b.x + h * k.x), clamp(b.y + h * k.y)};
  };
  std::vector<ReplicatorState<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n_steps) + 1);
  out.push_back(s);
  for (Index i = 0; i < n_steps; ++i) {
    const auto k1 = replicator_rhs(s, game);
    const auto k2 = replicator_rhs(shift(s, k1, dt / 2), game);
    const auto k3 = replicator_rhs(shift(s, k2, dt / 2), game);
    const auto k4 = replicator_rhs(shift(s, k3, dt), game);
    s.x = clamp(s.x + dt / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x));
    s.y = clamp(s.y + dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y));
    out.push_back(s);
  }
  return out;
}

/// Field on the uniform resolution x resolution grid over [0,1]^2, boundary included.
template <typename Scalar>
VectorFieldGrid<Scalar> vector_field(const MatrixGame& game, Index resolution) {
  require(resolution >= 2, "vector field resolution must be >= 2");
  VectorFieldGrid<Scalar> grid{resolution, {}};
  grid.samples.reserve(static_cast<std::size_t>(resolution * resolution));
  const Scalar step = Scalar(1) / Scalar(resolution - 1);
  for (Index j = 0; j < resolution; ++j) {
    for (Index i = 0; i < resolution; ++i) {
      // endpoints set exactly so vertices are evaluated at exact 0 and 1
      const Scalar x = i == resolution - 1 ? Scalar(1) : Scalar(i) * step;
      const Scalar y = j == resolution - 1 ? Scalar(1) : Scalar(j) * step;
      const auto d = replicator_rhs(ReplicatorState<Scalar>{x, y}, game);
      grid.samples.push_back({x, y, d.x, d.y});
    }
  }
  return grid;
}

}  // namespace marl_dyn
