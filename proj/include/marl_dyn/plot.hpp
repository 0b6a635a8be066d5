#pragma once

#include "marl_dyn/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace marl_dyn {

enum class PlotKind { phase_portrait, density, recurrence, sensitivity, divergence_curve, correlation_curve };

std::string to_string(PlotKind kind);
PlotKind parse_plot_kind(const std::string& s);

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Inputs by kind:
///   phase_portrait     trace CSVs (x_column/y_column), optional replicator field CSV (x,y,dx,dy)
///   density            density.csv
///   recurrence         recurrence.pgm; a .pgm output copies it, a .svg output wraps it
///   sensitivity        sensitivity.csv
///   divergence_curve   lyapunov_curve.csv
///   correlation_curve  correlation_curve.csv
struct PlotSpec {
  PlotKind kind = PlotKind::phase_portrait;
  std::vector<std::filesystem::path> inputs;
  std::optional<std::filesystem::path> field;
  std::string x_column = "theta_0";
  std::string y_column = "theta_1";
  std::optional<AxisRange> x_range;
  std::optional<AxisRange> y_range;
  std::filesystem::path output;

  void validate() const;
};

/// SVG text for every kind except a recurrence pass-through.
std::string render_svg(const PlotSpec& spec);

/// Writes spec.output atomically; nothing is written when inputs are unusable.
void render_plot(const PlotSpec& spec);

}  // namespace marl_dyn
