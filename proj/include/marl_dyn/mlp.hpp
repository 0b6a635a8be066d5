#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/rng.hpp"

#include <span>
#include <vector>

namespace marl_dyn {

struct DenseLayer {
  Matrix weights;  // fan_out x fan_in
  Vector bias;     // fan_out
};

/// Feedforward Q-network: rectifier on hidden layers, identity on the output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  Index input_size() const { return layers.front().weights.cols(); }
  Index output_size() const { return layers.back().bias.size(); }
  Index parameter_count() const;
  bool consistent() const;
};

/// Layer sizes [input, hidden..., output]; weights and biases drawn from
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
MlpParams make_mlp(std::span<const Index> sizes, Rng& init_rng);
MlpParams zero_mlp(std::span<const Index> sizes);

/// Flattening order: layer by layer, the weight matrix (column-major) then the bias.
Vector flatten(const MlpParams& params);
void unflatten(const Eigen::Ref<const Vector>& theta, MlpParams& params);

/// Batched forward pass. `inputs` is input_size x batch; returns output_size x batch.
Matrix mlp_forward(const MlpParams& params, const Eigen::Ref<const Matrix>& inputs);
Vector mlp_forward_one(const MlpParams& params, const Vector& input);

struct Transition {
  Index state = 0;
  int action = 0;
  double reward = 0.0;
  Index next_state = 0;
  bool terminal = false;
};

/// A minibatch with network inputs already materialized (columns are samples).
struct DqnBatch {
  Matrix states;
  Matrix next_states;
  std::vector<int> actions;
  Vector rewards;
  std::vector<bool> terminal;

  Index size() const { return rewards.size(); }
};

/// Mean squared TD error: mean_i (r_i + gamma * max_b Q_target(s'_i, b) [not terminal] - Q_online(s_i, a_i))^2.
double dqn_loss(const MlpParams& online, const MlpParams& target, const DqnBatch& batch, double gamma);

struct DqnGradient {
  std::vector<DenseLayer> layers;  // same shapes as the parameters
  double loss = 0.0;
};

/// Loss and its gradient with respect to the online parameters, by backpropagation.
DqnGradient dqn_gradient(const MlpParams& online, const MlpParams& target, const DqnBatch& batch, double gamma);

/// One plain gradient-descent step on the TD loss. Returns the loss before the step.
double dqn_update(MlpParams& online, const MlpParams& target, const DqnBatch& batch, double learning_rate,
                  double gamma);

/// Copies online into target when h is a multiple of every_k. Returns true when a copy happened.
bool sync_target(const MlpParams& online, MlpParams& target, Index every_k, Index h);

}  // namespace marl_dyn
