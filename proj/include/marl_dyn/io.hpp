#pragma once

#include "marl_dyn/coupled_sim.hpp"
#include "marl_dyn/diagnostics.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace marl_dyn {

/// Writes through a sibling temp file and renames it into place. If `fill` throws, the
/// temp file is removed and the target is left untouched.
void atomic_write(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill);
void atomic_write_text(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

/// Round-trip exact decimal form of a double.
std::string format_real(double v);

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  /// Index of a column; throws ConfigError naming the column when absent.
  Index column(const std::string& name) const;
  Vector col(const std::string& name) const { return values.col(column(name)); }
};

/// Leading lines starting with `#` are skipped; empty cells read as NaN.
CsvTable read_csv(const std::filesystem::path& path);

std::string trace_file_stem(Index run_index);

/// Writes run_NNN.csv (run_index,h,theta_0..) and its run_NNN.json sidecar. `config` is
/// embedded in the sidecar so a trace directory is self-describing.
void write_trace(const std::filesystem::path& dir, const TrajectoryTrace& trace, const nlohmann::json& config);

struct TraceSet {
  std::vector<TrajectoryTrace> traces;
  nlohmann::json config;  // embedded config of the first trace
  std::string config_hash;
};

/// Loads every run_NNN.csv/json pair in `dir`, in run order. Mixed config hashes raise
/// ConfigError unless `force` is set.
TraceSet read_trace_dir(const std::filesystem::path& dir, bool force = false);

nlohmann::json report_to_json(const DiagnosticsReport& report, const std::string& config_hash);

/// The report JSON at `report_path`, plus density.csv, lyapunov_curve.csv,
/// correlation_curve.csv and recurrence.pgm beside it where the report has them.
void write_report_files(const std::filesystem::path& report_path, const DiagnosticsReport& report,
                        const std::string& config_hash);

std::string density_csv(const EmpiricalDensity& density);
std::string lyapunov_curve_csv(const LyapunovFit& fit);
std::string correlation_curve_csv(const CorrelationDimFit& fit);

/// Binary PGM (P5). Row i of the raster is trace index i (time runs downward), column j is
/// trace index j (time runs right). 255 recurrent, 0 not recurrent, 128 inside the mask band.
std::string recurrence_pgm(const RecurrenceMatrix& rm, const std::string& config_hash);

struct PgmImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  std::vector<std::string> comments;
};

PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace marl_dyn
