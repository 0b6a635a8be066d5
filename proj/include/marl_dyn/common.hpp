#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace marl_dyn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Invalid user-supplied configuration (bad key, out-of-range value, unknown name).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a function precondition (shape mismatch, empty input, bad index).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Learner parameters became non-finite or exceeded the divergence guard.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t update_index, const std::string& what)
      : std::runtime_error(what), update_index_(update_index) {}
  std::int64_t update_index() const noexcept { return update_index_; }

 private:
  std::int64_t update_index_;
};

/// An estimator received input that carries no usable information (e.g. all points coincide).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace marl_dyn
