#include "marl_dyn/plot.hpp"

#include "marl_dyn/io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <iterator>
#include <limits>

namespace marl_dyn {

namespace fs = std::filesystem;

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::phase_portrait: return "phase_portrait";
    case PlotKind::density: return "density";
    case PlotKind::recurrence: return "recurrence";
    case PlotKind::sensitivity: return "sensitivity";
    case PlotKind::divergence_curve: return "divergence_curve";
    case PlotKind::correlation_curve: return "correlation_curve";
  }
  return "?";
}

PlotKind parse_plot_kind(const std::string& s) {
  for (auto k : {PlotKind::phase_portrait, PlotKind::density, PlotKind::recurrence, PlotKind::sensitivity,
                 PlotKind::divergence_curve, PlotKind::correlation_curve})
    if (to_string(k) == s) return k;
  throw ConfigError(fmt::format("unknown plot kind '{}'", s));
}

void PlotSpec::validate() const {
  if (inputs.empty()) throw ConfigError(fmt::format("plot {}: no input files", to_string(kind)));
  if (kind != PlotKind::phase_portrait && inputs.size() != 1)
    throw ConfigError(fmt::format("plot {}: expects exactly one input", to_string(kind)));
  if (field && kind != PlotKind::phase_portrait) throw ConfigError("plot: a field file only applies to phase_portrait");
  for (const auto* r : {&x_range, &y_range})
    if (*r && (!std::isfinite((*r)->lo) || !std::isfinite((*r)->hi) || !((*r)->lo < (*r)->hi)))
      throw ConfigError("plot: axis ranges must be finite with lo < hi");
  if (output.empty()) throw ConfigError("plot: output path required");
}

namespace {

constexpr double kWidth = 520.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 48.0;

std::string num(double v) { return fmt::format("{:.2f}", v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

AxisRange padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

AxisRange span_of(const std::vector<const Vector*>& cols) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* c : cols)
    for (Index i = 0; i < c->size(); ++i)
      if (std::isfinite((*c)(i))) {
        lo = std::min(lo, (*c)(i));
        hi = std::max(hi, (*c)(i));
      }
  return padded(lo, hi);
}

/// One plotting panel with data-to-pixel mapping.
class Panel {
 public:
  Panel(AxisRange x, AxisRange y, double left, double top, double width, double height)
      : x_(x), y_(y), left_(left), top_(top), w_(width), h_(height) {}

  double px(double x) const { return left_ + (x - x_.lo) / (x_.hi - x_.lo) * w_; }
  double py(double y) const { return top_ + h_ - (y - y_.lo) / (y_.hi - y_.lo) * h_; }
  double width() const { return w_; }
  double height() const { return h_; }

  void axes(std::string& out, const std::string& xlabel, const std::string& ylabel) const {
    fmt::format_to(std::back_inserter(out),
                   "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", num(left_),
                   num(top_), num(w_), num(h_));
    for (int k = 0; k <= 4; ++k) {
      const double xv = x_.lo + (x_.hi - x_.lo) * k / 4.0;
      const double yv = y_.lo + (y_.hi - y_.lo) * k / 4.0;
      fmt::format_to(std::back_inserter(out),
                     "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333\"/>"
                     "<text x=\"{0}\" y=\"{3}\" font-size=\"10\" text-anchor=\"middle\">{4:.3g}</text>\n",
                     num(px(xv)), num(top_ + h_), num(top_ + h_ + 4), num(top_ + h_ + 15), xv);
      fmt::format_to(std::back_inserter(out),
                     "<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"#333\"/>"
                     "<text x=\"{3}\" y=\"{4}\" font-size=\"10\" text-anchor=\"end\">{5:.3g}</text>\n",
                     num(left_ - 4), num(left_), num(py(yv)), num(left_ - 6), num(py(yv) + 3), yv);
    }
    fmt::format_to(std::back_inserter(out), "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                   num(left_ + w_ / 2), num(top_ + h_ + 32), escape(xlabel));
    fmt::format_to(std::back_inserter(out),
                   "<text x=\"{0}\" y=\"{1}\" font-size=\"12\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 {0} {1})\">{2}</text>\n",
                   num(left_ - 44), num(top_ + h_ / 2), escape(ylabel));
  }

  /// Polyline through finite points; NaN entries break the line.
  void polyline(std::string& out, const Vector& x, const Vector& y, const std::string& style) const {
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) fmt::format_to(std::back_inserter(out), "<polyline points=\"{}\" fill=\"none\" {}/>\n", pts, style);
      pts.clear();
    };
    for (Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(x(i)) || !std::isfinite(y(i))) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += num(px(x(i))) + "," + num(py(y(i)));
    }
    flush();
  }

 private:
  AxisRange x_, y_;
  double left_, top_, w_, h_;
};

std::string header(const std::string& title, double width = kWidth, double height = kHeight) {
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      num(width), num(height));
  fmt::format_to(std::back_inserter(out), "<text x=\"{}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                 num(width / 2), escape(title));
  return out;
}

Panel main_panel(AxisRange x, AxisRange y) {
  return Panel(x, y, kLeft, kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
}

CsvTable read_nonempty(const fs::path& path) {
  CsvTable t = read_csv(path);
  if (t.values.rows() == 0) throw ConfigError(fmt::format("'{}' has no data rows", path.string()));
  return t;
}

std::string star(double cx, double cy, double r) {
  std::string pts;
  for (int k = 0; k < 10; ++k) {
    const double a = -M_PI / 2 + k * M_PI / 5;
    const double rr = k % 2 == 0 ? r : 0.45 * r;
    if (k) pts += ' ';
    pts += num(cx + rr * std::cos(a)) + "," + num(cy + rr * std::sin(a));
  }
  return pts;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string phase_portrait(const PlotSpec& spec) {
  struct Path {
    Vector x, y;
  };
  std::vector<Path> paths;
  for (const auto& in : spec.inputs) {
    const CsvTable t = read_nonempty(in);
    paths.push_back({t.col(spec.x_column), t.col(spec.y_column)});
  }
  std::optional<CsvTable> field;
  if (spec.field) field = read_nonempty(*spec.field);

  std::vector<const Vector*> xs, ys;
  for (const auto& p : paths) {
    xs.push_back(&p.x);
    ys.push_back(&p.y);
  }
  Vector fx, fy, fdx, fdy;
  if (field) {
    fx = field->col("x");
    fy = field->col("y");
    fdx = field->col("dx");
    fdy = field->col("dy");
    xs.push_back(&fx);
    ys.push_back(&fy);
  }
  const Panel panel = main_panel(spec.x_range.value_or(span_of(xs)), spec.y_range.value_or(span_of(ys)));
  std::string out = header("phase portrait");
  panel.axes(out, spec.x_column, spec.y_column);

  if (field) {
    double longest = 0.0;
    for (Index i = 0; i < fx.size(); ++i) longest = std::max(longest, std::hypot(fdx(i), fdy(i)));
    const Index n = std::max<Index>(2, static_cast<Index>(std::lround(std::sqrt(static_cast<double>(fx.size())))));
    const double cell = std::min(panel.width(), panel.height()) / static_cast<double>(n);
    for (Index i = 0; i < fx.size(); ++i) {
      const double mag = std::hypot(fdx(i), fdy(i));
      if (longest <= 0.0 || mag <= 0.0) continue;
      // screen direction; the y axis points down
      const double len = 0.8 * cell * std::sqrt(mag / longest);
      const double ux = fdx(i) / mag, uy = -fdy(i) / mag;
      const double x0 = panel.px(fx(i)), y0 = panel.py(fy(i));
      const double x1 = x0 + len * ux, y1 = y0 + len * uy;
      const double hx = 0.3 * len, hw = 0.15 * len;
      fmt::format_to(std::back_inserter(out),
                     "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\"/>"
                     "<polygon points=\"{},{} {},{} {},{}\" fill=\"#999\"/>\n",
                     num(x0), num(y0), num(x1), num(y1), num(x1), num(y1), num(x1 - hx * ux - hw * uy),
                     num(y1 - hx * uy + hw * ux), num(x1 - hx * ux + hw * uy), num(y1 - hx * uy - hw * ux));
    }
  }
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const char* colour = kPalette[k % std::size(kPalette)];
    const auto& p = paths[k];
    panel.polyline(out, p.x, p.y, fmt::format("stroke=\"{}\" stroke-width=\"1\" stroke-opacity=\"0.8\"", colour));
    const Index last = p.x.size() - 1;
    fmt::format_to(std::back_inserter(out),
                   "<circle class=\"start\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\" stroke=\"black\"/>\n",
                   num(panel.px(p.x(0))), num(panel.py(p.y(0))), colour);
    fmt::format_to(std::back_inserter(out), "<polygon class=\"end\" points=\"{}\" fill=\"{}\" stroke=\"black\"/>\n",
                   star(panel.px(p.x(last)), panel.py(p.y(last)), 7.0), colour);
  }
  return out + "</svg>\n";
}

std::string colour_ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  // white to dark blue
  const int r = static_cast<int>(std::lround(255 - t * (255 - 8)));
  const int g = static_cast<int>(std::lround(255 - t * (255 - 48)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
  return fmt::format("#{:02x}{:02x}{:02x}", r, g, b);
}

std::string density(const PlotSpec& spec) {
  const CsvTable t = read_nonempty(spec.inputs[0]);
  const Vector dens = t.col("density");
  const double top = dens.maxCoeff();
  const bool two = std::find(t.header.begin(), t.header.end(), "y_lo") != t.header.end();
  const Vector xlo = t.col("x_lo"), xhi = t.col("x_hi");
  std::string out = header("stationary density");
  if (two) {
    const Vector ylo = t.col("y_lo"), yhi = t.col("y_hi");
    const Panel panel = main_panel(spec.x_range.value_or(AxisRange{xlo.minCoeff(), xhi.maxCoeff()}),
                                   spec.y_range.value_or(AxisRange{ylo.minCoeff(), yhi.maxCoeff()}));
    for (Index i = 0; i < dens.size(); ++i) {
      const double x0 = panel.px(xlo(i)), x1 = panel.px(xhi(i));
      const double y0 = panel.py(yhi(i)), y1 = panel.py(ylo(i));
      fmt::format_to(std::back_inserter(out), "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", num(x0),
                     num(y0), num(x1 - x0), num(y1 - y0), colour_ramp(top > 0 ? dens(i) / top : 0.0));
    }
    panel.axes(out, "x", "y");
  } else {
    const Panel panel = main_panel(spec.x_range.value_or(AxisRange{xlo.minCoeff(), xhi.maxCoeff()}),
                                   spec.y_range.value_or(AxisRange{0.0, top > 0 ? 1.05 * top : 1.0}));
    for (Index i = 0; i < dens.size(); ++i) {
      const double x0 = panel.px(xlo(i)), x1 = panel.px(xhi(i));
      const double y0 = panel.py(dens(i)), y1 = panel.py(0.0);
      fmt::format_to(std::back_inserter(out),
                     "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#08306b\" fill-opacity=\"0.7\"/>\n",
                     num(x0), num(y0), num(x1 - x0), num(y1 - y0));
    }
    panel.axes(out, "x", "density");
  }
  return out + "</svg>\n";
}

std::string recurrence_svg(const PlotSpec& spec) {
  const PgmImage img = read_pgm(spec.inputs[0]);
  if (img.width == 0 || img.height == 0) throw ConfigError(fmt::format("'{}' is empty", spec.inputs[0].string()));
  constexpr Index kCells = 200;
  const Index block = std::max<Index>(1, (std::max(img.width, img.height) + kCells - 1) / kCells);
  const Index nx = (img.width + block - 1) / block, ny = (img.height + block - 1) / block;
  const double side = 400.0;
  const double cell = side / static_cast<double>(std::max(nx, ny));
  std::string out = header("recurrence plot", side + 40, side + 60);
  out += "<desc>";
  for (const auto& c : img.comments) out += escape(c) + "\n";
  out += "</desc>\n";
  for (Index by = 0; by < ny; ++by) {
    for (Index bx = 0; bx < nx; ++bx) {
      double sum = 0.0;
      Index n = 0;
      for (Index y = by * block; y < std::min(img.height, (by + 1) * block); ++y)
        for (Index x = bx * block; x < std::min(img.width, (bx + 1) * block); ++x, ++n)
          sum += img.pixels[static_cast<std::size_t>(y * img.width + x)];
      const int v = static_cast<int>(std::lround(sum / static_cast<double>(n)));
      if (v == 0) continue;
      const int ink = 255 - v;
      fmt::format_to(std::back_inserter(out), "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#{:02x}{:02x}{:02x}\"/>\n",
                     num(20 + bx * cell), num(40 + by * cell), num(cell), num(cell), ink, ink, ink);
    }
  }
  fmt::format_to(std::back_inserter(out), "<rect x=\"20\" y=\"40\" width=\"{0}\" height=\"{0}\" fill=\"none\" stroke=\"#333\"/>\n",
                 num(static_cast<double>(std::max(nx, ny)) * cell));
  return out + "</svg>\n";
}

std::string sensitivity(const PlotSpec& spec) {
  const CsvTable t = read_nonempty(spec.inputs[0]);
  const Vector x = t.col("value");
  const struct {
    const char* mean;
    const char* sd;
    const char* label;
  } metrics[] = {{"lambda_mean", "lambda_sd", "lambda_max"}, {"d2_mean", "d2_sd", "D2"}, {"frob_mean", "frob_sd", "||Sigma||_F"}};
  const double panel_h = 110.0;
  const double height = kTop + 3 * (panel_h + 36.0) + 20.0;
  std::string out = header("sensitivity", kWidth, height);
  const AxisRange xr = spec.x_range.value_or(span_of({&x}));
  for (int k = 0; k < 3; ++k) {
    const Vector m = t.col(metrics[k].mean), s = t.col(metrics[k].sd);
    Vector lo = m - s, hi = m + s;
    const AxisRange yr = span_of({&lo, &hi, &m});
    const Panel panel(xr, yr, kLeft, kTop + k * (panel_h + 36.0), kWidth - kLeft - kRight, panel_h);
    panel.axes(out, k == 2 ? "swept value" : "", metrics[k].label);
    panel.polyline(out, x, m, "stroke=\"#1f77b4\" stroke-width=\"1.5\"");
    for (Index i = 0; i < x.size(); ++i) {
      if (!std::isfinite(m(i))) {
        fmt::format_to(std::back_inserter(out),
                       "<text class=\"failed\" x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#d62728\" "
                       "text-anchor=\"middle\">x</text>\n",
                       num(panel.px(x(i))), num(panel.py(yr.lo) - 4));
        continue;
      }
      const double px = panel.px(x(i));
      if (std::isfinite(s(i)))
        fmt::format_to(std::back_inserter(out),
                       "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#1f77b4\"/>"
                       "<line x1=\"{3}\" y1=\"{1}\" x2=\"{4}\" y2=\"{1}\" stroke=\"#1f77b4\"/>"
                       "<line x1=\"{3}\" y1=\"{2}\" x2=\"{4}\" y2=\"{2}\" stroke=\"#1f77b4\"/>\n",
                       num(px), num(panel.py(lo(i))), num(panel.py(hi(i))), num(px - 3), num(px + 3));
      fmt::format_to(std::back_inserter(out), "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"#1f77b4\"/>\n", num(px),
                     num(panel.py(m(i))));
    }
  }
  return out + "</svg>\n";
}

std::string curve(const PlotSpec& spec, const std::string& xcol, const std::string& ycol, const std::string& title) {
  const CsvTable t = read_nonempty(spec.inputs[0]);
  const Vector x = t.col(xcol), y = t.col(ycol), fit = t.col("in_fit");
  const Panel panel = main_panel(spec.x_range.value_or(span_of({&x})), spec.y_range.value_or(span_of({&y})));
  std::string out = header(title);
  panel.axes(out, xcol, ycol);
  panel.polyline(out, x, y, "stroke=\"#1f77b4\" stroke-width=\"1.5\"");
  for (Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || !std::isfinite(y(i))) continue;
    fmt::format_to(std::back_inserter(out), "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>\n", num(panel.px(x(i))),
                   num(panel.py(y(i))), fit(i) > 0.5 ? "#d62728" : "#1f77b4");
  }
  return out + "</svg>\n";
}

std::string svg_body(const PlotSpec& spec) {
  switch (spec.kind) {
    case PlotKind::phase_portrait: return phase_portrait(spec);
    case PlotKind::density: return density(spec);
    case PlotKind::recurrence: return recurrence_svg(spec);
    case PlotKind::sensitivity: return sensitivity(spec);
    case PlotKind::divergence_curve: return curve(spec, "steps", "mean_log_divergence", "nearest-neighbour divergence");
    case PlotKind::correlation_curve: return curve(spec, "log_r", "log_c", "correlation sum");
  }
  throw ConfigError("unknown plot kind");
}

// Config hashes named by the inputs: "# config_hash" comment lines or a trace sidecar.
std::vector<std::string> input_hashes(const PlotSpec& spec) {
  std::vector<fs::path> paths = spec.inputs;
  if (spec.field) paths.push_back(*spec.field);
  std::vector<std::string> hashes;
  auto add = [&](const std::string& h) {
    if (!h.empty() && std::find(hashes.begin(), hashes.end(), h) == hashes.end()) hashes.push_back(h);
  };
  const std::string tag = "config_hash ";
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    std::string line;
    if (p.extension() == ".pgm") std::getline(in, line);  // magic number
    while (std::getline(in, line) && line.starts_with("#")) {
      const auto at = line.find(tag);
      if (at != std::string::npos) add(line.substr(at + tag.size()));
    }
    fs::path sidecar = p;
    sidecar.replace_extension(".json");
    if (p.extension() == ".csv" && fs::exists(sidecar)) {
      try {
        std::ifstream js(sidecar);
        const auto doc = nlohmann::json::parse(js);
        if (doc.contains("config_hash") && doc["config_hash"].is_string()) add(doc["config_hash"].get<std::string>());
      } catch (const nlohmann::json::exception&) {
      }
    }
  }
  return hashes;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  spec.validate();
  std::string svg = svg_body(spec);
  const auto hashes = input_hashes(spec);
  std::string joined;
  for (const auto& h : hashes) joined += (joined.empty() ? "" : " ") + h;
  // after the opening <svg> tag
  const auto at = svg.find('\n') + 1;
  svg.insert(at, fmt::format("<!-- config_hash {} -->\n", joined.empty() ? "unknown" : escape(joined)));
  return svg;
}

void render_plot(const PlotSpec& spec) {
  spec.validate();
  if (spec.kind == PlotKind::recurrence && spec.output.extension() == ".pgm") {
    (void)read_pgm(spec.inputs[0]);
    std::ifstream in(spec.inputs[0], std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    atomic_write_text(spec.output, bytes);
    return;
  }
  const std::string svg = render_svg(spec);
  atomic_write_text(spec.output, svg);
}

}  // namespace marl_dyn
