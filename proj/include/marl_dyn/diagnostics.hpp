#pragma once

#include "marl_dyn/common.hpp"
#include "marl_dyn/coupled_sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace marl_dyn {

// ---------------------------------------------------------------------------
// Estimator results
// ---------------------------------------------------------------------------

/// Normalized histogram of 1-D or 2-D samples. For 1-D input counts has one column.
struct EmpiricalDensity {
  std::vector<Vector> edges;  // per dimension, bins + 1 entries
  Matrix counts;
  Matrix density;  // counts / (n_samples * bin volume)
  Index n_samples = 0;

  double bin_volume() const;
  /// Integral of the density over the histogram support; 1 up to roundoff.
  double mass() const;
};

struct CovarianceSummary {
  Matrix sigma;
  double frobenius = 0.0;
};

struct LyapunovFit {
  double lambda_max = 0.0;  // per unit of `spacing` (per update step when spacing is the record stride)
  Vector curve;             // mean log divergence for z = 0..z_max
  Index z_min = 0;
  Index z_max = 0;
  double r_squared = 0.0;
  double spacing = 1.0;
};

/// Binary recurrence matrix. Entries inside the identity band |i-j| <= mask_width are
/// kept (the diagonal is always 1) but excluded from the rate; renderers grey them out.
struct RecurrenceMatrix {
  Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> r;
  double epsilon = 0.0;
  double target_rate = 0.0;
  double achieved_rate = 0.0;
  Index mask_width = 0;

  Index size() const { return r.rows(); }
  bool masked(Index i, Index j) const { return (i > j ? i - j : j - i) <= mask_width; }
};

struct CorrelationDimFit {
  double d2 = 0.0;
  Vector radii;
  Vector correlation_sums;  // C(r) for each radius
  Index window_begin = 0;   // inclusive index into radii
  Index window_end = 0;     // exclusive
  double r_squared = 0.0;
  bool degenerate = false;
  Index embedding_m = 0;    // 0 when the input was used as-is
  Index embedding_tau = 0;
};

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// Histogram over the given ranges (empty ranges: data min/max). Out-of-range samples land
/// in the outermost bins. Only 1 or 2 columns are accepted.
EmpiricalDensity stationary_distribution(const Eigen::Ref<const Matrix>& samples, const std::vector<Index>& bins,
                                         const std::vector<std::pair<double, double>>& ranges = {});

/// Unbiased sample covariance (divisor H - 1) and its Frobenius norm.
CovarianceSummary covariance_frobenius(const Eigen::Ref<const Matrix>& samples);

/// Nearest-neighbour divergence estimate of the maximal Lyapunov exponent.
/// Neighbours closer than theiler_w in time are ignored; zero distances are skipped in the
/// log average. `spacing` converts the slope from per-row to per-update-step units.
LyapunovFit max_lyapunov(const Eigen::Ref<const Matrix>& trace, Index theiler_w, Index z_min, Index z_max,
                         double spacing = 1.0);

/// Threshold chosen as the target_rate quantile of off-band pairwise distances.
RecurrenceMatrix recurrence_matrix(const Eigen::Ref<const Matrix>& trace, double target_rate, Index mask_width);

/// Recurrence matrix at a fixed threshold.
RecurrenceMatrix recurrence_at_threshold(const Eigen::Ref<const Matrix>& trace, double epsilon, Index mask_width);

/// Rows [x_h, x_{h+tau}, ..., x_{h+(m-1)tau}] for h = 0 .. L - (m-1)tau - 1.
Matrix delay_embed(const Eigen::Ref<const Vector>& series, Index m, Index tau);

/// Grassberger-Procaccia correlation dimension.
///
/// Radii are log-spaced between the 5th and 50th percentiles of the pairwise distances
/// (pairs closer than theiler_w in time excluded). The scaling window is the contiguous run
/// of at least five radii with the best linear fit of log C against log r. Distances below
/// resolution_tol * max|coordinate| count as coincident, so a cloud that is numerically a
/// point (or a majority of coincident pairs) is reported as degenerate with d2 = 0.
CorrelationDimFit correlation_dimension(const Eigen::Ref<const Matrix>& points, Index n_radii, Index theiler_w = 0,
                                        double resolution_tol = 1e-6);

/// Pairwise Euclidean distances of the rows of `points`.
Matrix pairwise_distances(const Eigen::Ref<const Matrix>& points);

// ---------------------------------------------------------------------------
// Ensemble report
// ---------------------------------------------------------------------------

struct DiagnosticsSettings {
  Index theiler_w = 20;
  Index z_min = 1;
  Index z_max = 30;
  double target_rate = 0.08;
  Index recurrence_mask = 20;
  Index n_radii = 24;
  Index embed_m = 4;
  Index embed_tau = 5;
  bool embed_scalar = true;  // delay-embed traces that have a single column
  std::vector<Index> density_bins{20, 20};
  std::vector<std::pair<double, double>> density_range;  // empty: data range
  Index max_points = 4000;  // rows kept per run for pairwise estimators

  void validate() const;
};

struct ScalarStats {
  std::vector<double> values;  // per contributing run
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  bool available() const { return !values.empty(); }
};

ScalarStats summarize(std::vector<double> values);

struct DiagnosticsReport {
  Index n_runs = 0;
  Index n_diverged = 0;
  Index n_post_burn_samples = 0;
  Index dimension = 0;
  ScalarStats frobenius;       // per run
  double frobenius_pooled = 0.0;
  ScalarStats lambda_max;      // per run, degenerate runs excluded
  Index lambda_degenerate = 0;
  ScalarStats d2;              // per run
  Index d2_degenerate = 0;
  std::optional<EmpiricalDensity> density;
  std::optional<RecurrenceMatrix> recurrence;  // first usable run
  std::optional<LyapunovFit> lyapunov_example;
  std::optional<CorrelationDimFit> correlation_example;
  std::vector<std::string> errors;
};

/// Runs the full estimator suite on the post-burn part of an ensemble.
DiagnosticsReport diagnose(const std::vector<TrajectoryTrace>& traces, const DiagnosticsSettings& settings,
                           Index n_burn, Index record_stride);

}  // namespace marl_dyn
