#include "marl_dyn/mlp.hpp"

#include <cmath>

namespace marl_dyn {

namespace {

std::vector<DenseLayer> shaped_like(const MlpParams& p) {
  std::vector<DenseLayer> out;
  out.reserve(p.layers.size());
  for (const auto& l : p.layers) out.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
  return out;
}

void check_batch(const MlpParams& online, const MlpParams& target, const DqnBatch& batch) {
  require(batch.size() > 0, "dqn update needs a non-empty batch");
  require(batch.states.cols() == batch.size() && batch.next_states.cols() == batch.size(), "batch column mismatch");
  require(static_cast<Index>(batch.actions.size()) == batch.size() &&
              static_cast<Index>(batch.terminal.size()) == batch.size(),
          "batch length mismatch");
  require(batch.states.rows() == online.input_size() && batch.next_states.rows() == target.input_size(),
          "batch feature size does not match network input");
  require(online.output_size() == target.output_size(), "online and target output sizes differ");
}

Vector td_targets(const MlpParams& target, const DqnBatch& batch, double gamma) {
  const Matrix next_q = mlp_forward(target, batch.next_states);
  Vector y = batch.rewards;
  for (Index i = 0; i < batch.size(); ++i)
    if (!batch.terminal[i]) y(i) += gamma * next_q.col(i).maxCoeff();
  return y;
}

}  // namespace

Index MlpParams::parameter_count() const {
  Index n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

bool MlpParams::consistent() const {
  if (layers.empty()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].weights.rows() != layers[k].bias.size()) return false;
    if (k > 0 && layers[k].weights.cols() != layers[k - 1].weights.rows()) return false;
  }
  return true;
}

MlpParams zero_mlp(std::span<const Index> sizes) {
  require(sizes.size() >= 2, "an MLP needs at least input and output sizes");
  MlpParams p;
  for (std::size_t k = 1; k < sizes.size(); ++k)
    p.layers.push_back({Matrix::Zero(sizes[k], sizes[k - 1]), Vector::Zero(sizes[k])});
  return p;
}

MlpParams make_mlp(std::span<const Index> sizes, Rng& init_rng) {
  MlpParams p = zero_mlp(sizes);
  for (auto& l : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index j = 0; j < l.weights.cols(); ++j)
      for (Index i = 0; i < l.weights.rows(); ++i) l.weights(i, j) = u(init_rng);
    for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = u(init_rng);
  }
  return p;
}

Vector flatten(const MlpParams& params) {
  Vector theta(params.parameter_count());
  Index at = 0;
  for (const auto& l : params.layers) {
    theta.segment(at, l.weights.size()) = l.weights.reshaped();
    at += l.weights.size();
    theta.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return theta;
}

void unflatten(const Eigen::Ref<const Vector>& theta, MlpParams& params) {
  require(theta.size() == params.parameter_count(), "parameter vector length mismatch");
  Index at = 0;
  for (auto& l : params.layers) {
    l.weights.reshaped() = theta.segment(at, l.weights.size());
    at += l.weights.size();
    l.bias = theta.segment(at, l.bias.size());
    at += l.bias.size();
  }
}

Matrix mlp_forward(const MlpParams& params, const Eigen::Ref<const Matrix>& inputs) {
  require(params.consistent(), "inconsistent MLP layer shapes");
  require(inputs.rows() == params.input_size(), "input size does not match the network");
  Matrix a = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& l = params.layers[k];
    Matrix z = l.weights * a;
    z.colwise() += l.bias;
    if (k + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Vector mlp_forward_one(const MlpParams& params, const Vector& input) {
  return mlp_forward(params, Eigen::Ref<const Matrix>(input));
}

double dqn_loss(const MlpParams& online, const MlpParams& target, const DqnBatch& batch, double gamma) {
  check_batch(online, target, batch);
  const Vector y = td_targets(target, batch, gamma);
  const Matrix q = mlp_forward(online, batch.states);
  double sum = 0.0;
  for (Index i = 0; i < batch.size(); ++i) {
    const double e = y(i) - q(batch.actions[i], i);
    sum += e * e;
  }
  return sum / static_cast<double>(batch.size());
}

DqnGradient dqn_gradient(const MlpParams& online, const MlpParams& target, const DqnBatch& batch, double gamma) {
  check_batch(online, target, batch);
  const Vector y = td_targets(target, batch, gamma);
  const std::size_t n_layers = online.layers.size();
  const Index b = batch.size();

  // activations[k] is the input to layer k; activations[n_layers] is the output.
  std::vector<Matrix> activations;
  activations.reserve(n_layers + 1);
  activations.push_back(batch.states);
  for (std::size_t k = 0; k < n_layers; ++k) {
    const auto& l = online.layers[k];
    Matrix z = l.weights * activations.back();
    z.colwise() += l.bias;
    if (k + 1 < n_layers) z = z.cwiseMax(0.0);
    activations.push_back(std::move(z));
  }

  DqnGradient g{shaped_like(online), 0.0};
  const Matrix& q = activations.back();
  Matrix delta = Matrix::Zero(q.rows(), b);
  for (Index i = 0; i < b; ++i) {
    const double e = y(i) - q(batch.actions[i], i);
    g.loss += e * e;
    delta(batch.actions[i], i) = -2.0 * e / static_cast<double>(b);
  }
  g.loss /= static_cast<double>(b);

  for (std::size_t k = n_layers; k-- > 0;) {
    g.layers[k].weights.noalias() = delta * activations[k].transpose();
    g.layers[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    Matrix back = online.layers[k].weights.transpose() * delta;
    // rectifier derivative: the stored post-activation is positive exactly where the unit was active
    delta = back.cwiseProduct((activations[k].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

double dqn_update(MlpParams& online, const MlpParams& target, const DqnBatch& batch, double learning_rate,
                  double gamma) {
  if (learning_rate == 0.0) return dqn_loss(online, target, batch, gamma);
  DqnGradient g = dqn_gradient(online, target, batch, gamma);
  for (std::size_t k = 0; k < online.layers.size(); ++k) {
    online.layers[k].weights -= learning_rate * g.layers[k].weights;
    online.layers[k].bias -= learning_rate * g.layers[k].bias;
  }
  return g.loss;
}

bool sync_target(const MlpParams& online, MlpParams& target, Index every_k, Index h) {
  require(every_k >= 1, "target sync interval must be >= 1");
  if (h % every_k != 0) return false;
  target = online;
  return true;
}

}  // namespace marl_dyn
