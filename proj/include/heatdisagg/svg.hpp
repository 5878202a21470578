#pragma once

// Minimal static SVG charts: scatter with branch lines, category histograms,
// Normal density curves and daily time series.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "heatdisagg/analyze.hpp"
#include "heatdisagg/infer.hpp"
#include "heatdisagg/timeutil.hpp"

namespace heatdisagg::svg {

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 400.0;
inline constexpr double kMargin = 50.0;

inline const char* palette(std::size_t i) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[i % std::size(colors)];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
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

/// Linear map from data ranges onto the plotting area.
struct Frame {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  static Frame fit(double x0, double x1, double y0, double y1) {
    auto widen = [](double& lo, double& hi) {
      if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
      }
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    };
    widen(x0, x1);
    widen(y0, y1);
    return {x0, x1, y0, y1};
  }
  double px(double x) const { return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin); }
  double py(double y) const { return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin); }
};

class Document {
 public:
  explicit Document(std::string_view title) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
         << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
    out_ << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
         << "\" fill=\"white\"/>\n";
    text(kWidth / 2, 24, title, "middle", 16);
  }

  void axes(const Frame& f, std::string_view x_label, std::string_view y_label) {
    const double x0 = kMargin, x1 = kWidth - kMargin, y0 = kHeight - kMargin, y1 = kMargin;
    out_ << "<path class=\"axes\" d=\"M" << num(x0) << ' ' << num(y1) << " L" << num(x0) << ' ' << num(y0) << " L"
         << num(x1) << ' ' << num(y0) << "\" stroke=\"black\" fill=\"none\"/>\n";
    text((x0 + x1) / 2, kHeight - 12, x_label, "middle", 12);
    out_ << "<text x=\"14\" y=\"" << num((y0 + y1) / 2) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
         << num((y0 + y1) / 2) << ")\">" << escape(y_label) << "</text>\n";
    text(x0, y0 + 16, num(f.x_min), "start", 10);
    text(x1, y0 + 16, num(f.x_max), "end", 10);
    text(x0 - 4, y0, num(f.y_min), "end", 10);
    text(x0 - 4, y1 + 10, num(f.y_max), "end", 10);
  }

  void text(double x, double y, std::string_view s, std::string_view anchor, int size) {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
         << "\">" << escape(s) << "</text>\n";
  }

  void circle(double x, double y, double r, std::string_view color) {
    out_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << color
         << "\" fill-opacity=\"0.6\"/>\n";
  }

  void line(double x0, double y0, double x1, double y1, std::string_view color, double width = 2.0) {
    out_ << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y1)
         << "\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }

  void rect(std::string_view cls, double x, double y, double w, double h, std::string_view color,
            double opacity = 1.0) {
    out_ << "<rect class=\"" << cls << "\" x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
         << "\" height=\"" << num(h) << "\" fill=\"" << color << "\" fill-opacity=\"" << num(opacity) << "\"/>\n";
  }

  void polyline(std::span<const double> xs, std::span<const double> ys, std::string_view color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) out_ << (i ? " " : "") << num(xs[i]) << ',' << num(ys[i]);
    out_ << "\"/>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------

struct Point {
  double x = 0.0, y = 0.0;
};

struct Segment {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct ScatterSpec {
  std::string title = "Daily consumption vs temperature";
  std::vector<Point> points;       // (degC, kWh)
  std::vector<Segment> lines;      // fitted branches
  std::optional<Support> band;     // threshold interval on the x axis
};

/// One <circle> per point, one <line> per segment and a single band <rect>.
inline std::string scatter(const ScatterSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : spec.points) {
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  if (spec.points.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  const Frame f = Frame::fit(x0, x1, y0, y1);
  Document doc(spec.title);
  doc.axes(f, "temperature (C)", "daily consumption (kWh)");
  if (spec.band) {
    const double lo = std::clamp(f.px(spec.band->low), kMargin, kWidth - kMargin);
    const double hi = std::clamp(f.px(spec.band->high), kMargin, kWidth - kMargin);
    doc.rect("band", lo, kMargin, std::max(hi - lo, 1.0), kHeight - 2 * kMargin, "#999999", 0.25);
  }
  for (const auto& p : spec.points) doc.circle(f.px(p.x), f.py(p.y), 2.5, palette(0));
  for (std::size_t i = 0; i < spec.lines.size(); ++i) {
    const auto& s = spec.lines[i];
    doc.line(f.px(s.x0), f.py(std::clamp(s.y0, f.y_min, f.y_max)), f.px(s.x1),
             f.py(std::clamp(s.y1, f.y_min, f.y_max)), palette(i + 1));
  }
  return doc.finish();
}

/// Branch segments of a fitted model in physical units over [t_min, t_max] degC.
inline std::vector<Segment> branch_segments(const ModelParams& p, const ScalingParams& s, double t_min_c,
                                            double t_max_c) {
  auto kwh = [&](double scaled_c) { return invert_scaling(scaled_c, s, ScaleKind::Consumption); };
  const double top = p.top_threshold();
  const double top_c = top * s.t_scale;
  std::vector<Segment> out;
  const double lo_c = std::min(t_min_c, top_c);
  for (std::size_t m = 0; m < p.M(); ++m) {
    const double t_lo = lo_c / s.t_scale;
    out.push_back({lo_c, kwh(p.w_left[m] * t_lo + p.b_left[m]), top_c, kwh(p.w_left[m] * top + p.b_left[m])});
  }
  const double hi_c = std::max(t_max_c, top_c);
  out.push_back({top_c, kwh(p.w_R * top + p.b), hi_c, kwh(p.w_R * hi_c / s.t_scale + p.b)});
  return out;
}

/// Bars per category; heights are proportional to bin counts.
inline std::string histogram(const HistogramTable& table, std::string_view title = "Cold-region slopes") {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  std::size_t max_count = 1;
  std::vector<std::string> cats;
  for (const auto& b : table.bins) {
    x0 = std::min(x0, b.bin_low), x1 = std::max(x1, b.bin_high);
    max_count = std::max(max_count, b.count);
    if (std::find(cats.begin(), cats.end(), b.category) == cats.end()) cats.push_back(b.category);
  }
  if (table.bins.empty()) x0 = 0.0, x1 = 1.0;
  const Frame f = Frame::fit(x0, x1, 0.0, static_cast<double>(max_count));
  Document doc(title);
  doc.axes(f, "slope (kWh/C)", "households");
  const double n_cats = static_cast<double>(std::max<std::size_t>(cats.size(), 1));
  for (const auto& b : table.bins) {
    const auto ci = static_cast<std::size_t>(std::find(cats.begin(), cats.end(), b.category) - cats.begin());
    const double full = f.px(b.bin_high) - f.px(b.bin_low);
    const double w = full / n_cats;
    const double top = f.py(static_cast<double>(b.count));
    doc.rect("bar", f.px(b.bin_low) + w * static_cast<double>(ci), top, w, f.py(0.0) - top, palette(ci), 0.8);
  }
  for (std::size_t i = 0; i < cats.size(); ++i)
    doc.text(kWidth - kMargin, kMargin + 14.0 * static_cast<double>(i + 1), cats[i], "end", 11);
  return doc.finish();
}

struct DensityCurve {
  std::string label;
  Stat stat;
};

/// Normal approximations of marginal posteriors, one <polyline> per curve.
inline std::string densities(std::span<const DensityCurve> curves, std::string_view title,
                             std::string_view x_label, int n_grid = 200) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0.0;
  for (const auto& c : curves) {
    const double sd = std::max(c.stat.std, 1e-9);
    x0 = std::min(x0, c.stat.mean - 4 * sd);
    x1 = std::max(x1, c.stat.mean + 4 * sd);
    y1 = std::max(y1, 1.0 / (sd * std::sqrt(2 * std::numbers::pi)));
  }
  if (curves.empty()) x0 = 0.0, x1 = 1.0, y1 = 1.0;
  const Frame f = Frame::fit(x0, x1, 0.0, y1);
  Document doc(title);
  doc.axes(f, x_label, "density");
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double sd = std::max(curves[i].stat.std, 1e-9);
    std::vector<double> xs, ys;
    for (int g = 0; g <= n_grid; ++g) {
      const double x = f.x_min + (f.x_max - f.x_min) * g / n_grid;
      const double z = (x - curves[i].stat.mean) / sd;
      xs.push_back(f.px(x));
      ys.push_back(f.py(std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * std::numbers::pi))));
    }
    doc.polyline(xs, ys, palette(i));
    doc.text(kWidth - kMargin, kMargin + 14.0 * static_cast<double>(i + 1), curves[i].label, "end", 11);
  }
  return doc.finish();
}

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Daily series against a shared date axis, one <polyline> per series.
inline std::string timeseries(std::span<const Date> dates, std::span<const Series> series, std::string_view title,
                              std::string_view y_label) {
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& s : series)
    for (double v : s.values) y0 = std::min(y0, v), y1 = std::max(y1, v);
  if (!std::isfinite(y0)) y0 = 0.0, y1 = 1.0;
  const double x1 = dates.empty() ? 1.0 : static_cast<double>((dates.back() - dates.front()).count());
  const Frame f = Frame::fit(0.0, x1, y0, y1);
  Document doc(title);
  doc.axes(f, "day", y_label);
  if (!dates.empty()) {
    doc.text(kMargin, kHeight - kMargin + 28, format_date(dates.front()), "start", 10);
    doc.text(kWidth - kMargin, kHeight - kMargin + 28, format_date(dates.back()), "end", 10);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < dates.size() && k < series[i].values.size(); ++k) {
      xs.push_back(f.px(static_cast<double>((dates[k] - dates.front()).count())));
      ys.push_back(f.py(series[i].values[k]));
    }
    doc.polyline(xs, ys, palette(i));
    doc.text(kWidth - kMargin, kMargin + 14.0 * static_cast<double>(i + 1), series[i].label, "end", 11);
  }
  return doc.finish();
}

}  // namespace heatdisagg::svg
