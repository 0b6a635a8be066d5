#include "marl_dyn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

namespace marl_dyn {

namespace {

// Coordinates at or below this count use direct differences; wider traces use a centered Gram product.
constexpr Index kDirectMaxDim = 8;

class DistanceEngine {
 public:
  explicit DistanceEngine(const Eigen::Ref<const Matrix>& points) : n_(points.rows()) {
    if (points.cols() <= kDirectMaxDim) {
      points_ = points;
    } else {
      centered_ = points.rowwise() - points.colwise().mean();
      sq_norms_ = centered_.rowwise().squaredNorm();
    }
  }

  Index size() const { return n_; }

  /// Distances from rows [i0, i0 + count) to every row.
  Matrix block(Index i0, Index count) const {
    const Index n = n_;
    Matrix out(count, n);
    if (centered_.size() == 0) {
      for (Index r = 0; r < count; ++r)
        out.row(r) = (points_.rowwise() - points_.row(i0 + r)).rowwise().norm().transpose();
      return out;
    }
    out.noalias() = -2.0 * centered_.middleRows(i0, count) * centered_.transpose();
    out.rowwise() += sq_norms_.transpose();
    out.colwise() += sq_norms_.segment(i0, count);
    out = out.cwiseMax(0.0).cwiseSqrt();
    for (Index r = 0; r < count; ++r) out(r, i0 + r) = 0.0;
    return out;
  }

  template <typename Fn>
  void for_each_block(Fn&& fn, Index block_rows = 256) const {
    for (Index i0 = 0; i0 < size(); i0 += block_rows) {
      const Index count = std::min(block_rows, size() - i0);
      fn(i0, block(i0, count));
    }
  }

 private:
  Index n_;
  Matrix points_;  // direct mode
  Matrix centered_;
  Vector sq_norms_;
};

bool all_rows_equal(const Eigen::Ref<const Matrix>& x) {
  for (Index i = 1; i < x.rows(); ++i)
    if (x.row(i) != x.row(0)) return false;
  return true;
}

struct LineFit {
  double slope = 0.0;
  double r_squared = 0.0;
};

LineFit fit_line(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  const double mx = x.mean(), my = y.mean();
  const Vector dx = x.array() - mx;
  const Vector dy = y.array() - my;
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  const double sxy = dx.dot(dy);
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

Index bin_index(double v, double lo, double hi, Index bins) {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(t >= 0.0)) return 0;  // also catches NaN
  return std::min(bins - 1, static_cast<Index>(t));
}

}  // namespace

Matrix pairwise_distances(const Eigen::Ref<const Matrix>& points) {
  DistanceEngine engine(points);
  Matrix d(points.rows(), points.rows());
  engine.for_each_block([&](Index i0, const Matrix& b) { d.middleRows(i0, b.rows()) = b; });
  // symmetrize roundoff from the Gram route
  return (d + d.transpose()) / 2.0;
}

// ---------------------------------------------------------------------------

double EmpiricalDensity::bin_volume() const {
  double v = 1.0;
  for (const auto& e : edges) v *= (e(e.size() - 1) - e(0)) / static_cast<double>(e.size() - 1);
  return v;
}

double EmpiricalDensity::mass() const { return density.sum() * bin_volume(); }

EmpiricalDensity stationary_distribution(const Eigen::Ref<const Matrix>& samples, const std::vector<Index>& bins,
                                         const std::vector<std::pair<double, double>>& ranges) {
  require(samples.rows() > 0, "stationary_distribution needs at least one sample");
  const Index dim = samples.cols();
  if (dim < 1 || dim > 2)
    throw ContractViolation(fmt::format("histograms are limited to 1 or 2 dimensions (got {}); project first", dim));
  require(static_cast<Index>(bins.size()) >= dim, "need a bin count per dimension");
  require(ranges.empty() || static_cast<Index>(ranges.size()) >= dim, "need a range per dimension");

  EmpiricalDensity h;
  h.n_samples = samples.rows();
  std::vector<Index> nb(2, 1);
  std::vector<std::pair<double, double>> rg(2, {0.0, 1.0});
  for (Index d = 0; d < dim; ++d) {
    const auto k = static_cast<std::size_t>(d);
    nb[k] = bins[k];
    require(nb[k] >= 1, "bin counts must be >= 1");
    if (!ranges.empty()) {
      rg[k] = ranges[k];
    } else {
      rg[k] = {samples.col(d).minCoeff(), samples.col(d).maxCoeff()};
    }
    if (!(rg[k].second > rg[k].first)) rg[k] = {rg[k].first - 0.5, rg[k].first + 0.5};
    require(std::isfinite(rg[k].first) && std::isfinite(rg[k].second), "histogram ranges must be finite");
    h.edges.push_back(Vector::LinSpaced(nb[k] + 1, rg[k].first, rg[k].second));
  }

  h.counts = Matrix::Zero(nb[0], nb[1]);
  for (Index i = 0; i < samples.rows(); ++i) {
    const Index a = bin_index(samples(i, 0), rg[0].first, rg[0].second, nb[0]);
    const Index b = dim == 2 ? bin_index(samples(i, 1), rg[1].first, rg[1].second, nb[1]) : 0;
    h.counts(a, b) += 1.0;
  }
  h.density = h.counts / (static_cast<double>(h.n_samples) * h.bin_volume());
  return h;
}

CovarianceSummary covariance_frobenius(const Eigen::Ref<const Matrix>& samples) {
  require(samples.rows() >= 2, "covariance needs at least two samples");
  const Matrix centered = samples.rowwise() - samples.colwise().mean();
  CovarianceSummary c;
  c.sigma = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  c.frobenius = c.sigma.norm();
  return c;
}

LyapunovFit max_lyapunov(const Eigen::Ref<const Matrix>& trace, Index theiler_w, Index z_min, Index z_max,
                         double spacing) {
  require(theiler_w >= 0 && z_min >= 0 && z_max >= z_min + 1, "need theiler_w >= 0 and 0 <= z_min < z_max");
  require(spacing > 0.0, "spacing must be positive");
  const Index n = trace.rows();
  if (n <= z_max + theiler_w + 2)
    throw ContractViolation(fmt::format("trace of {} rows too short for z_max = {} and theiler_w = {}", n, z_max,
                                        theiler_w));
  require(trace.allFinite(), "trace must be finite");
  if (all_rows_equal(trace)) throw DegenerateInput("no divergence information: all points coincide");

  const Index m = n - z_max;
  const auto prefix = trace.topRows(m);
  std::vector<Index> neighbour(static_cast<std::size_t>(m), -1);
  DistanceEngine engine(prefix);
  engine.for_each_block([&](Index i0, const Matrix& b) {
    for (Index r = 0; r < b.rows(); ++r) {
      const Index i = i0 + r;
      double best = std::numeric_limits<double>::infinity();
      Index arg = -1;
      for (Index j = 0; j < m; ++j) {
        if (std::abs(i - j) <= theiler_w) continue;
        if (b(r, j) < best) {
          best = b(r, j);
          arg = j;
        }
      }
      neighbour[static_cast<std::size_t>(i)] = arg;
    }
  });

  LyapunovFit fit;
  fit.z_min = z_min;
  fit.z_max = z_max;
  fit.spacing = spacing;
  fit.curve = Vector::Zero(z_max + 1);
  for (Index z = 0; z <= z_max; ++z) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < m; ++i) {
      const Index j = neighbour[static_cast<std::size_t>(i)];
      if (j < 0) continue;
      const double d = (trace.row(i + z) - trace.row(j + z)).norm();
      if (d > 0.0) {
        sum += std::log(d);
        ++count;
      }
    }
    if (count == 0)
      throw DegenerateInput(fmt::format("no divergence information: every neighbour pair coincides at z = {}", z));
    fit.curve(z) = sum / static_cast<double>(count);
  }
  const Index len = z_max - z_min + 1;
  const Vector zs = Vector::LinSpaced(len, static_cast<double>(z_min), static_cast<double>(z_max));
  const LineFit lf = fit_line(zs, fit.curve.segment(z_min, len));
  fit.lambda_max = lf.slope / spacing;
  fit.r_squared = lf.r_squared;
  return fit;
}

RecurrenceMatrix recurrence_at_threshold(const Eigen::Ref<const Matrix>& trace, double epsilon, Index mask_width) {
  require(trace.rows() >= 2, "recurrence needs at least two rows");
  require(mask_width >= 0 && mask_width < trace.rows() - 1, "mask width leaves no off-band pairs");
  const Index n = trace.rows();
  RecurrenceMatrix rm;
  rm.r.resize(n, n);
  rm.epsilon = epsilon;
  rm.target_rate = std::numeric_limits<double>::quiet_NaN();
  rm.mask_width = mask_width;
  DistanceEngine engine(trace);
  std::int64_t hits = 0, pairs = 0;
  engine.for_each_block([&](Index i0, const Matrix& b) {
    for (Index r = 0; r < b.rows(); ++r) {
      const Index i = i0 + r;
      for (Index j = 0; j < n; ++j) {
        // the lower triangle mirrors rows already filled, so R is exactly symmetric
        const bool hit = j < i ? rm.r(j, i) == 1 : (j == i || b(r, j) <= epsilon);
        rm.r(i, j) = hit ? 1 : 0;
        if (j > i + mask_width) {
          ++pairs;
          hits += hit ? 1 : 0;
        }
      }
    }
  });
  rm.achieved_rate = static_cast<double>(hits) / static_cast<double>(pairs);
  return rm;
}

RecurrenceMatrix recurrence_matrix(const Eigen::Ref<const Matrix>& trace, double target_rate, Index mask_width) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) throw ConfigError("target_rate must lie in (0, 1)");
  require(trace.rows() >= 2, "recurrence needs at least two rows");
  require(mask_width >= 0 && mask_width < trace.rows() - 1, "mask width leaves no off-band pairs");
  const Index n = trace.rows();
  std::vector<double> off_band;
  off_band.reserve(static_cast<std::size_t>((n - mask_width) * (n - mask_width - 1) / 2));
  DistanceEngine engine(trace);
  engine.for_each_block([&](Index i0, const Matrix& b) {
    for (Index r = 0; r < b.rows(); ++r)
      for (Index j = i0 + r + mask_width + 1; j < n; ++j) off_band.push_back(b(r, j));
  });
  const auto m = off_band.size();
  auto k = static_cast<std::size_t>(std::ceil(target_rate * static_cast<double>(m)));
  k = std::clamp<std::size_t>(k, 1, m);
  std::nth_element(off_band.begin(), off_band.begin() + static_cast<std::ptrdiff_t>(k - 1), off_band.end());
  const double eps = off_band[k - 1];
  RecurrenceMatrix rm = recurrence_at_threshold(trace, eps, mask_width);
  rm.target_rate = target_rate;
  return rm;
}

Matrix delay_embed(const Eigen::Ref<const Vector>& series, Index m, Index tau) {
  require(m >= 1 && tau >= 1, "embedding needs m >= 1 and tau >= 1");
  const Index len = series.size();
  if (len <= (m - 1) * tau)
    throw ContractViolation(fmt::format("series of length {} too short for m = {}, tau = {}", len, m, tau));
  const Index rows = len - (m - 1) * tau;
  Matrix out(rows, m);
  for (Index c = 0; c < m; ++c) out.col(c) = series.segment(c * tau, rows);
  return out;
}

CorrelationDimFit correlation_dimension(const Eigen::Ref<const Matrix>& points, Index n_radii, Index theiler_w,
                                        double resolution_tol) {
  require(points.rows() >= 2, "correlation dimension needs at least two points");
  require(n_radii >= 5, "correlation dimension needs at least five radii");
  require(theiler_w >= 0 && theiler_w < points.rows() - 1, "theiler window leaves no pairs");
  require(points.allFinite(), "points must be finite");
  const Index n = points.rows();

  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>((n - theiler_w) * (n - theiler_w - 1) / 2));
  DistanceEngine engine(points);
  engine.for_each_block([&](Index i0, const Matrix& b) {
    for (Index r = 0; r < b.rows(); ++r)
      for (Index j = i0 + r + theiler_w + 1; j < n; ++j) dist.push_back(b(r, j));
  });
  std::sort(dist.begin(), dist.end());

  CorrelationDimFit fit;
  const double floor = resolution_tol * points.cwiseAbs().maxCoeff();
  const auto pairs = static_cast<double>(dist.size());
  auto percentile = [&](double p) { return dist[static_cast<std::size_t>(std::floor(p * (pairs - 1)))]; };
  const double r_hi = percentile(0.50);
  double r_lo = percentile(0.05);
  if (!(r_hi > floor)) {
    fit.degenerate = true;
    return fit;
  }
  if (!(r_lo > floor)) r_lo = *std::upper_bound(dist.begin(), dist.end(), floor);
  if (!(r_hi > r_lo)) {
    fit.degenerate = true;
    return fit;
  }

  fit.radii.resize(n_radii);
  fit.correlation_sums.resize(n_radii);
  const double log_lo = std::log(r_lo), log_hi = std::log(r_hi);
  for (Index k = 0; k < n_radii; ++k) {
    const double r = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(k) / static_cast<double>(n_radii - 1));
    fit.radii(k) = r;
    const auto below = std::lower_bound(dist.begin(), dist.end(), r) - dist.begin();
    fit.correlation_sums(k) = static_cast<double>(below) / pairs;
  }

  const Vector log_r = fit.radii.array().log();
  const Vector log_c = fit.correlation_sums.array().max(std::numeric_limits<double>::min()).log();
  double best_r2 = -1.0;
  for (Index begin = 0; begin < n_radii; ++begin) {
    if (fit.correlation_sums(begin) <= 0.0) continue;
    for (Index end = begin + 5; end <= n_radii; ++end) {
      if (fit.correlation_sums(end - 1) <= 0.0) break;
      const LineFit lf = fit_line(log_r.segment(begin, end - begin), log_c.segment(begin, end - begin));
      const bool better = lf.r_squared > best_r2 + 1e-12 ||
                          (std::abs(lf.r_squared - best_r2) <= 1e-12 && end - begin > fit.window_end - fit.window_begin);
      if (better) {
        best_r2 = lf.r_squared;
        fit.window_begin = begin;
        fit.window_end = end;
        fit.d2 = lf.slope;
        fit.r_squared = lf.r_squared;
      }
    }
  }
  if (best_r2 < 0.0) fit.degenerate = true;
  return fit;
}

// ---------------------------------------------------------------------------

void DiagnosticsSettings::validate() const {
  if (theiler_w < 0) throw ConfigError("theiler_w must be >= 0");
  if (z_min < 0 || z_max <= z_min) throw ConfigError("need 0 <= z_min < z_max");
  if (!(target_rate > 0.0 && target_rate < 1.0)) throw ConfigError("target_rate must lie in (0, 1)");
  if (recurrence_mask < 0) throw ConfigError("recurrence_mask must be >= 0");
  if (n_radii < 5) throw ConfigError("n_radii must be >= 5");
  if (embed_m < 1) throw ConfigError("embed_m must be >= 1");
  if (embed_tau < 1) throw ConfigError("embed_tau must be >= 1");
  if (density_bins.empty() || density_bins.size() > 2) throw ConfigError("density_bins needs one or two entries");
  for (Index b : density_bins)
    if (b < 1) throw ConfigError("density_bins entries must be >= 1");
  for (const auto& [lo, hi] : density_range)
    if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) throw ConfigError("density_range needs finite lo < hi");
  if (max_points < 100) throw ConfigError("max_points must be >= 100");
}

ScalarStats summarize(std::vector<double> values) {
  ScalarStats s;
  s.values = std::move(values);
  if (s.values.empty()) return s;
  const double n = static_cast<double>(s.values.size());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  if (s.values.size() > 1) {
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

DiagnosticsReport diagnose(const std::vector<TrajectoryTrace>& traces, const DiagnosticsSettings& settings,
                           Index n_burn, Index record_stride) {
  require(!traces.empty(), "diagnose needs a non-empty ensemble");
  settings.validate();
  require(record_stride >= 1, "record_stride must be >= 1");

  DiagnosticsReport report;
  report.n_runs = static_cast<Index>(traces.size());
  std::vector<double> frob, lambda, d2;

  for (const auto& trace : traces) {
    if (trace.meta.diverged) {
      ++report.n_diverged;
      continue;
    }
    const Matrix samples = post_burn(trace, n_burn);
    report.dimension = samples.cols();
    report.n_post_burn_samples += samples.rows();
    const std::string tag = fmt::format("run {}", trace.meta.run_index);

    if (samples.rows() >= 2) frob.push_back(covariance_frobenius(samples).frobenius);

    const Index stride = (samples.rows() + settings.max_points - 1) / settings.max_points;
    Matrix kept(samples.rows() == 0 ? 0 : (samples.rows() + stride - 1) / stride, samples.cols());
    for (Index r = 0; r < kept.rows(); ++r) kept.row(r) = samples.row(r * stride);
    if (kept.cols() == 1 && settings.embed_scalar && settings.embed_m > 1)
      kept = delay_embed(kept.col(0), settings.embed_m, settings.embed_tau);
    const double spacing = static_cast<double>(record_stride * stride);

    try {
      LyapunovFit fit = max_lyapunov(kept, settings.theiler_w, settings.z_min, settings.z_max, spacing);
      lambda.push_back(fit.lambda_max);
      if (!report.lyapunov_example) report.lyapunov_example = std::move(fit);
    } catch (const DegenerateInput& e) {
      ++report.lambda_degenerate;
      report.errors.push_back(fmt::format("{}: lambda_max: {}", tag, e.what()));
    } catch (const ContractViolation& e) {
      report.errors.push_back(fmt::format("{}: lambda_max: {}", tag, e.what()));
    }

    try {
      CorrelationDimFit fit = correlation_dimension(kept, settings.n_radii, settings.theiler_w);
      if (kept.cols() != samples.cols()) {
        fit.embedding_m = settings.embed_m;
        fit.embedding_tau = settings.embed_tau;
      }
      if (fit.degenerate) ++report.d2_degenerate;
      d2.push_back(fit.d2);
      if (!report.correlation_example) report.correlation_example = std::move(fit);
    } catch (const ContractViolation& e) {
      report.errors.push_back(fmt::format("{}: d2: {}", tag, e.what()));
    }

    if (!report.recurrence) {
      try {
        report.recurrence = recurrence_matrix(kept, settings.target_rate, settings.recurrence_mask);
      } catch (const ContractViolation& e) {
        report.errors.push_back(fmt::format("{}: recurrence: {}", tag, e.what()));
      }
    }
  }
  if (report.n_diverged == report.n_runs) throw DivergenceError(-1, "every ensemble member diverged");

  report.frobenius = summarize(std::move(frob));
  report.lambda_max = summarize(std::move(lambda));
  report.d2 = summarize(std::move(d2));

  const Matrix pooled = post_burn_samples(traces, n_burn);
  if (pooled.rows() >= 2) report.frobenius_pooled = covariance_frobenius(pooled).frobenius;
  if (pooled.cols() <= 2) {
    std::vector<Index> bins(settings.density_bins);
    if (bins.size() < static_cast<std::size_t>(pooled.cols())) bins.resize(2, bins.front());
    report.density = stationary_distribution(pooled, bins, settings.density_range);
  }
  return report;
}

}  // namespace marl_dyn
