#include "rram/iv_analysis.hpp"

#include "rram/device.hpp"
#include "rram/error.hpp"
#include "rram/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

namespace rram::iv {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Running sums for closed-form least-squares lines over index ranges.
struct PrefixSums {
  std::vector<double> x, y, xx, xy, yy;

  PrefixSums(const Eigen::ArrayXd& xs, const Eigen::ArrayXd& ys) {
    const auto n = static_cast<std::size_t>(xs.size());
    x.assign(n + 1, 0.0);
    y = xx = xy = yy = x;
    for (std::size_t k = 0; k < n; ++k) {
      x[k + 1] = x[k] + xs[k];
      y[k + 1] = y[k] + ys[k];
      xx[k + 1] = xx[k] + xs[k] * xs[k];
      xy[k + 1] = xy[k] + xs[k] * ys[k];
      yy[k + 1] = yy[k] + ys[k] * ys[k];
    }
  }

  struct Line {
    double slope, intercept, sse;
  };

  // Inclusive index range [a, b].
  Line fit(std::size_t a, std::size_t b) const {
    const double n = static_cast<double>(b - a + 1);
    const double sx = x[b + 1] - x[a], sy = y[b + 1] - y[a];
    const double sxx = xx[b + 1] - xx[a] - sx * sx / n;
    const double sxy = xy[b + 1] - xy[a] - sx * sy / n;
    const double syy = yy[b + 1] - yy[a] - sy * sy / n;
    const double slope = sxy / sxx;
    return {slope, (sy - slope * sx) / n, std::max(0.0, syy - slope * sxy)};
  }
};

struct Window {
  Eigen::ArrayXd v, i;
};

Window select(const IVTrace& t, double lo, double hi, bool lo_inclusive) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    const double v = t.v[k];
    const bool above = lo_inclusive ? v >= lo : v > lo;
    if (above && v <= hi) keep.push_back(k);
  }
  Window w{Eigen::ArrayXd(keep.size()), Eigen::ArrayXd(keep.size())};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    w.v[k] = t.v[keep[k]];
    w.i[k] = t.i[keep[k]];
  }
  return w;
}

}  // namespace

void IVTrace::validate() const {
  if (v.size() != i.size()) throw Error(ErrorKind::InvalidArgument, "v and i lengths differ");
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!std::isfinite(v[k]) || !std::isfinite(i[k]))
      throw Error(ErrorKind::InvalidArgument, "non-finite sample at row " + std::to_string(k));
    if (k > 0 && !(v[k] > v[k - 1]))
      throw Error(ErrorKind::InvalidArgument, "voltages must be strictly increasing");
  }
}

IVTrace read_trace_csv(std::istream& in) {
  std::vector<double> vs, is;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "v_V,i_A")
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected header v_V,i_A");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected two columns");
    try {
      std::size_t u1 = 0, u2 = 0;
      const auto a = trim(line.substr(0, comma)), b = trim(line.substr(comma + 1));
      vs.push_back(std::stod(a, &u1));
      is.push_back(std::stod(b, &u2));
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad number");
    }
  }
  if (!header_seen) throw Error(ErrorKind::ParseError, "empty I-V file");
  if (vs.empty()) throw Error(ErrorKind::ParseError, "I-V file has no data rows");
  IVTrace t;
  t.v = Eigen::Map<Eigen::ArrayXd>(vs.data(), static_cast<Eigen::Index>(vs.size()));
  t.i = Eigen::Map<Eigen::ArrayXd>(is.data(), static_cast<Eigen::Index>(is.size()));
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return t;
}

IVTrace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
  return read_trace_csv(in);
}

void write_trace_csv(std::ostream& out, const IVTrace& t) {
  out << "v_V,i_A\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < t.size(); ++k) out << t.v[k] << ',' << t.i[k] << '\n';
}

TunnelFit fit_direct(const IVTrace& trace, double v_max) {
  const auto w = select(trace, 0.0, v_max, false);
  if (w.v.size() < 3)
    throw Error(ErrorKind::InsufficientData, "direct fit needs >= 3 points in (0, " + std::to_string(v_max) + "]");
  TunnelFit fit;
  fit.regime = TunnelRegime::Direct;
  fit.coeff_a = (w.v * w.i).sum() / w.v.square().sum();
  fit.fit_window = {w.v[0], w.v[w.v.size() - 1]};
  fit.points = static_cast<int>(w.v.size());
  const double scale = std::sqrt(w.i.square().mean());
  const double rms = std::sqrt((w.i - fit.coeff_a * w.v).square().mean());
  fit.rms_residual = scale > 0.0 ? rms / scale : 0.0;
  return fit;
}

TunnelFit fit_fn(const IVTrace& trace, double v_min) {
  if (!(v_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "v_min must be positive");
  const auto w = select(trace, v_min, std::numeric_limits<double>::infinity(), true);
  if (w.v.size() < 3)
    throw Error(ErrorKind::InsufficientData, "FN fit needs >= 3 points with v >= " + std::to_string(v_min));
  if ((w.i <= 0.0).any()) throw Error(ErrorKind::NonPositiveCurrent, "FN fit window has i <= 0");

  const Eigen::ArrayXd x = w.v.inverse();
  const Eigen::ArrayXd y = (w.i / w.v.square()).log();
  PrefixSums sums(x, y);
  const auto line = sums.fit(0, static_cast<std::size_t>(x.size() - 1));

  TunnelFit fit;
  fit.regime = TunnelRegime::FowlerNordheim;
  fit.coeff_b = -line.slope;
  fit.coeff_a = std::exp(line.intercept);
  // Roundoff on pure-quadratic data can leave a tiny negative exponent.
  if (fit.coeff_b < 0.0 && fit.coeff_b > -1e-9) fit.coeff_b = 0.0;
  if (fit.coeff_b < 0.0)
    throw Error(ErrorKind::DegenerateFit, "ln(I/V^2) increases with 1/V; not FN-like");
  fit.fit_window = {w.v[0], w.v[w.v.size() - 1]};
  fit.points = static_cast<int>(w.v.size());
  fit.rms_residual = std::sqrt(line.sse / static_cast<double>(x.size()));
  return fit;
}

SclcFit fit_sclc(const IVTrace& trace, int min_segment) {
  trace.validate();
  const auto n = static_cast<std::size_t>(trace.size());
  if (n < 12) throw Error(ErrorKind::InsufficientData, "SCLC fit needs >= 12 points");
  if (min_segment < 2) throw Error(ErrorKind::InvalidArgument, "min_segment must be >= 2");
  if ((trace.v <= 0.0).any()) throw Error(ErrorKind::InvalidArgument, "SCLC fit needs the positive branch");
  if ((trace.i <= 0.0).any()) throw Error(ErrorKind::NonPositiveCurrent, "SCLC fit needs i > 0");

  const Eigen::ArrayXd x = trace.v.log10();
  const Eigen::ArrayXd y = trace.i.log10();
  PrefixSums sums(x, y);
  const std::size_t m = static_cast<std::size_t>(min_segment) - 1;  // span in sample steps

  double best = std::numeric_limits<double>::infinity();
  std::size_t best_p = 0, best_q = 0;
  for (std::size_t p = m; p + 2 * m <= n - 1; ++p) {
    const double e1 = sums.fit(0, p).sse;
    if (e1 >= best) continue;
    for (std::size_t q = p + m; q + m <= n - 1; ++q) {
      const double e = e1 + sums.fit(p, q).sse + sums.fit(q, n - 1).sse;
      if (e < best) {
        best = e;
        best_p = p;
        best_q = q;
      }
    }
  }

  SclcFit fit;
  fit.breakpoints = {trace.v[static_cast<Eigen::Index>(best_p)], trace.v[static_cast<Eigen::Index>(best_q)]};
  fit.s1 = sums.fit(0, best_p).slope;
  fit.s2 = sums.fit(best_p, best_q).slope;
  fit.s3 = sums.fit(best_q, n - 1).slope;
  fit.alpha = fit.s3;
  fit.sse = best;
  if (fit.s3 <= fit.s2 + 1e-9)
    throw Error(ErrorKind::DegenerateFit, "no trap-filling region (s3 <= s2)");
  return fit;
}

TrapExtraction trap_density(double v_tfl, double thickness_l, double eps_r) {
  if (!(thickness_l > 0.0)) throw Error(ErrorKind::InvalidArgument, "thickness must be positive");
  if (!(eps_r > 0.0)) throw Error(ErrorKind::InvalidArgument, "permittivity must be positive");
  if (!(v_tfl >= 0.0)) throw Error(ErrorKind::InvalidArgument, "V_TFL must be nonnegative");
  TrapExtraction t;
  t.v_tfl = v_tfl;
  t.thickness_l = thickness_l;
  t.eps_r = eps_r;
  t.n_t = 2.0 * kVacuumPermittivity * eps_r * v_tfl / (kElementaryCharge * thickness_l * thickness_l);
  return t;
}

double trap_filled_voltage(double n_t, double thickness_l, double eps_r) {
  return kElementaryCharge * n_t * thickness_l * thickness_l / (2.0 * kVacuumPermittivity * eps_r);
}

double model_current(const ConductionModel& model, double v) {
  struct Visitor {
    double v;
    double operator()(const DirectModel& m) const { return m.a * v; }
    double operator()(const FowlerNordheimModel& m) const { return m.a * v * v * std::exp(-m.b / v); }
    double operator()(const SclcModel& m) const {
      if (v <= m.v1) return m.i_at_v1 * std::pow(v / m.v1, m.s1);
      const double at_v2 = m.i_at_v1 * std::pow(m.v2 / m.v1, m.s2);
      if (v <= m.v2) return m.i_at_v1 * std::pow(v / m.v1, m.s2);
      return at_v2 * std::pow(v / m.v2, m.s3);
    }
    double operator()(const SinhModel& m) const { return sinh_current(m.g, v, m.v_read, m.v_nl); }
  };
  return std::visit(Visitor{v}, model);
}

IVTrace generate_synthetic(const ConductionModel& model, const Eigen::ArrayXd& grid, NoiseSpec noise) {
  IVTrace t;
  t.v = grid;
  t.i.resize(grid.size());
  Rng rng(noise.seed);
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    t.i[k] = model_current(model, grid[k]);
    if (noise.sigma > 0.0) t.i[k] *= lognormal_factor(noise.sigma, normal01(rng));
  }
  t.validate();
  return t;
}

Eigen::ArrayXd log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw Error(ErrorKind::InvalidArgument, "bad log grid");
  return Eigen::ArrayXd::LinSpaced(n, std::log(lo), std::log(hi)).exp();
}

}  // namespace rram::iv
