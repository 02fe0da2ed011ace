#include "rram/svg.hpp"

#include "rram/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace rram::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kMarginLeft = 70, kMarginRight = 20, kMarginTop = 34, kMarginBottom = 50;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double map(double v) const { return log ? std::log10(v) : v; }
  void include(double v) {
    if (!std::isfinite(v) || (log && v <= 0.0)) return;
    lo = std::min(lo, map(v));
    hi = std::max(hi, map(v));
  }
  void finish() {
    if (lo > hi) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-300) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

}  // namespace

Series& Plot::add(std::string name, std::vector<double> x, std::vector<double> y, Style style) {
  series.push_back({std::move(name), std::move(x), std::move(y), style, {}});
  return series.back();
}

std::string Plot::render() const {
  Axis ax{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), log_x};
  Axis ay{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), log_y};
  for (const auto& s : series) {
    for (double v : s.x) ax.include(v);
    for (double v : s.y) ay.include(v);
    if (s.style == Style::Bars) ay.include(0.0);
  }
  ax.finish();
  ay.finish();

  const double pw = width - kMarginLeft - kMarginRight;
  const double ph = height - kMarginTop - kMarginBottom;
  if (equal_aspect) {
    const double sx = (ax.hi - ax.lo) / pw, sy = (ay.hi - ay.lo) / ph;
    if (sx > sy) {
      const double extra = (sx * ph - (ay.hi - ay.lo)) / 2;
      ay.lo -= extra, ay.hi += extra;
    } else {
      const double extra = (sy * pw - (ax.hi - ax.lo)) / 2;
      ax.lo -= extra, ax.hi += extra;
    }
  }
  auto px = [&](double v) { return kMarginLeft + (ax.map(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto py = [&](double v) { return kMarginTop + ph - (ay.map(v) - ay.lo) / (ay.hi - ay.lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = ax.lo + (ax.hi - ax.lo) * k / 4.0;
    const double fy = ay.lo + (ay.hi - ay.lo) * k / 4.0;
    const double x = kMarginLeft + pw * k / 4.0;
    const double y = kMarginTop + ph - ph * k / 4.0;
    o << "<text x=\"" << x << "\" y=\"" << kMarginTop + ph + 16 << "\" text-anchor=\"middle\">"
      << num(log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
    o << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
      << num(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  o << "<text x=\"" << kMarginLeft + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
    << escape(x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << kMarginTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(y_label) << "</text>\n";

  std::size_t palette_index = 0;
  for (const auto& s : series) {
    const std::string color = s.color.empty() ? kPalette[palette_index++ % std::size(kPalette)] : s.color;
    const std::size_t n = std::min(s.x.size(), s.y.size());
    auto ok = [&](std::size_t i) {
      return std::isfinite(s.x[i]) && std::isfinite(s.y[i]) && (!log_x || s.x[i] > 0) && (!log_y || s.y[i] > 0);
    };
    if (s.style == Style::Scatter) {
      for (std::size_t i = 0; i < n; ++i)
        if (ok(i))
          o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"1.6\" fill=\"" << color
            << "\" fill-opacity=\"0.6\"/>\n";
    } else if (s.style == Style::Bars) {
      const double half = n > 1 ? 0.35 * pw / static_cast<double>(n) : 8.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!ok(i)) continue;
        const double y0 = py(0.0), y1 = py(s.y[i]);
        o << "<rect x=\"" << px(s.x[i]) - half / 2 << "\" y=\"" << std::min(y0, y1) << "\" width=\"" << half
          << "\" height=\"" << std::abs(y0 - y1) << "\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
      }
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.4\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        if (!ok(i)) continue;
        if (s.style == Style::Steps && i > 0 && ok(i - 1)) o << px(s.x[i]) << ',' << py(s.y[i - 1]) << ' ';
        o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      }
      o << "\"/>\n";
    }
  }
  int legend_y = kMarginTop + 14;
  palette_index = 0;
  for (const auto& s : series) {
    const std::string color = s.color.empty() ? kPalette[palette_index++ % std::size(kPalette)] : s.color;
    if (s.name.empty()) continue;
    o << "<rect x=\"" << kMarginLeft + pw - 130 << "\" y=\"" << legend_y - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/><text x=\"" << kMarginLeft + pw - 115 << "\" y=\"" << legend_y << "\">" << escape(s.name)
      << "</text>\n";
    legend_y += 14;
  }
  o << "</svg>\n";
  return o.str();
}

void Plot::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out << render();
}

}  // namespace rram::svg
