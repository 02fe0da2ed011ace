#include "rram/crossbar.hpp"

#include "rram/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace rram {

void CrossbarConfig::validate(const DeviceParams& p, bool differential) const {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::InvalidArgument, "crossbar needs rows, cols >= 1");
  if (differential && rows % 2 != 0)
    throw Error(ErrorKind::InvalidArgument, "differential crossbar needs an even row count");
  if (line_r < 0.0) throw Error(ErrorKind::InvalidArgument, "line_r must be >= 0");
  if (!(v_read_amp > 0.0) || v_read_amp > p.v_read + 1e-15)
    throw Error(ErrorKind::InvalidArgument, "v_read_amp must be in (0, v_read]");
  if (!(c_bl > 0.0)) throw Error(ErrorKind::InvalidArgument, "c_bl must be positive");
  if (!(resolved_diff_g_min(p) > 0.0)) throw Error(ErrorKind::InvalidArgument, "diff_g_min must be positive");
}

Crossbar::Crossbar(CrossbarConfig config, DeviceParams params)
    : config_(config), params_(std::move(params)) {
  params_.validate();
  config_.validate(params_, false);
  g_ = Eigen::MatrixXd::Constant(config_.rows, config_.cols, params_.g_min);
  scale_ = Eigen::MatrixXd::Ones(config_.rows, config_.cols);
  refresh_sums();
}

Crossbar Crossbar::with_variation(CrossbarConfig config, DeviceParams params, std::uint64_t seed) {
  Crossbar xbar(config, std::move(params));
  Rng rng(seed);
  for (int c = 0; c < xbar.cols(); ++c)
    for (int r = 0; r < xbar.rows(); ++r) {
      xbar.scale_(r, c) = lognormal_factor(xbar.params_.sigma_d2d, normal01(rng));
      xbar.g_(r, c) = xbar.params_.g_min * xbar.scale_(r, c);
    }
  xbar.refresh_sums();
  return xbar;
}

void Crossbar::set_cell(int r, int c, const RramCell& cell) {
  g_(r, c) = cell.g;
  scale_(r, c) = cell.area_scale * cell.d2d_factor;
  col_sum_[c] = g_.col(c).sum();
}

void Crossbar::set_conductance(int r, int c, double g) {
  const auto cl = cell(r, c);
  g_(r, c) = std::clamp(g, cl.g_lo(params_), cl.g_hi(params_));
  col_sum_[c] = g_.col(c).sum();
}

void Crossbar::refresh_sums() { col_sum_ = g_.colwise().sum().transpose(); }

// --- encoding --------------------------------------------------------------------

std::pair<double, double> encode_differential(double w, const DeviceParams& p) {
  if (!(std::abs(w) <= 1.0)) throw Error(ErrorKind::InvalidArgument, "weight outside [-1, 1]");
  const auto map = DifferentialMap::from(p, 2);
  return {map.g_center + w * map.g_half, map.g_center - w * map.g_half};
}

Eigen::MatrixXd differential_targets(const Eigen::MatrixXd& weights, const DeviceParams& p) {
  Eigen::MatrixXd out(2 * weights.rows(), weights.cols());
  for (Eigen::Index c = 0; c < weights.cols(); ++c)
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      const auto [gp, gm] = encode_differential(weights(r, c), p);
      out(2 * r, c) = gp;
      out(2 * r + 1, c) = gm;
    }
  return out;
}

Eigen::MatrixXd decode_weights(const Eigen::MatrixXd& g, const DeviceParams& p) {
  const auto map = DifferentialMap::from(p, static_cast<int>(g.rows()));
  Eigen::MatrixXd w(g.rows() / 2, g.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) w.row(r) = (g.row(2 * r) - g.row(2 * r + 1)) / (2.0 * map.g_half);
  return w;
}

double effective_dynamic_range(int levels, double diff_g_min, const DeviceParams& p) {
  if (levels < 2) throw Error(ErrorKind::InvalidArgument, "need at least two levels");
  if (!(diff_g_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "diff_g_min must be positive");
  return 2.0 * (p.g_max - p.g_min) / diff_g_min;
}

// --- programming -------------------------------------------------------------------

std::vector<double> incremental_ltp_table(const DeviceParams& p) {
  const auto scheme = PulseScheme::incremental_100();
  std::vector<double> table{p.g_min};
  RramCell cell = pristine_cell(p);
  for (double v : scheme.set_amplitudes) {
    cell = apply_pulse(cell, p, v, scheme.width);
    table.push_back(cell.g);
  }
  return table;
}

namespace {

struct CellOutcome {
  int set = 0, reset = 0;
  bool exhausted = false;
};

CellOutcome program_open_loop(RramCell& cell, const DeviceParams& p, double target,
                              const std::vector<double>& table, const PulseScheme& ladder) {
  CellOutcome out;
  for (double v : ladder.reset_amplitudes) {
    cell = apply_pulse(cell, p, v, ladder.width);
    ++out.reset;
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < table.size(); ++k)
    if (std::abs(table[k] - target) < std::abs(table[best] - target)) best = k;
  for (std::size_t k = 0; k < best; ++k) {
    cell = apply_pulse(cell, p, ladder.set_amplitudes[k], ladder.width);
    ++out.set;
  }
  return out;
}

// Program-and-verify: each step reads the cell, then issues the ladder pulse
// whose nominal-model prediction lands closest to the target.
CellOutcome program_closed_loop(RramCell& cell, const DeviceParams& p, double target, double tol,
                                int budget, const PulseScheme& ladder) {
  CellOutcome out;
  for (int used = 0;; ++used) {
    const double err = cell.g - target;
    if (std::abs(err) <= tol) return out;
    if (used >= budget) break;
    const bool set = err < 0.0;
    const auto& amps = set ? ladder.set_amplitudes : ladder.reset_amplitudes;
    const RramCell nominal{cell.g, 1.0, 1.0};
    double best_v = amps.front();
    double best_miss = std::numeric_limits<double>::infinity();
    for (double v : amps) {
      const double miss = std::abs(apply_pulse(nominal, p, v, ladder.width).g - target);
      if (miss < best_miss) {
        best_miss = miss;
        best_v = v;
      }
    }
    const double before = cell.g;
    cell = apply_pulse(cell, p, best_v, ladder.width);
    ++(set ? out.set : out.reset);
    if (cell.g == before) break;  // pinned at a window bound
  }
  out.exhausted = true;
  return out;
}

}  // namespace

ProgramReport program_weights(Crossbar& xbar, const Eigen::MatrixXd& targets, const ProgramMode& mode) {
  const auto& p = xbar.params();
  if (targets.rows() != xbar.rows() || targets.cols() != xbar.cols())
    throw Error(ErrorKind::InvalidArgument, "target grid shape does not match the crossbar");
  const double slack = 1e-12 * p.g_max;
  if ((targets.array() < p.g_min - slack).any() || (targets.array() > p.g_max + slack).any())
    throw Error(ErrorKind::TargetOutOfRange, "targets must lie within [g_min, g_max]");

  ProgramReport report;
  report.error.setZero(xbar.rows(), xbar.cols());
  report.set_pulses.setZero(xbar.rows(), xbar.cols());
  report.reset_pulses.setZero(xbar.rows(), xbar.cols());
  report.exhausted.setConstant(xbar.rows(), xbar.cols(), false);

  const auto ladder = PulseScheme::incremental_100();
  const auto table = incremental_ltp_table(p);
  double tol = 0.0;
  if (const auto* cl = std::get_if<ClosedLoop>(&mode))
    tol = cl->tolerance > 0.0 ? cl->tolerance : 0.5 * xbar.config().resolved_diff_g_min(p);

  for (int c = 0; c < xbar.cols(); ++c)
    for (int r = 0; r < xbar.rows(); ++r) {
      const double target = targets(r, c);
      RramCell cell = xbar.cell(r, c);
      CellOutcome outcome;
      if (std::holds_alternative<OpenLoop>(mode)) {
        outcome = program_open_loop(cell, p, target, table, ladder);
      } else if (const auto* cl = std::get_if<ClosedLoop>(&mode)) {
        outcome = program_closed_loop(cell, p, target, tol, cl->budget, ladder);
      } else {
        cell.g = std::clamp(target, cell.g_lo(p), cell.g_hi(p));
      }
      xbar.set_cell(r, c, cell);
      report.error(r, c) = cell.g - target;
      report.set_pulses(r, c) = outcome.set;
      report.reset_pulses(r, c) = outcome.reset;
      report.exhausted(r, c) = outcome.exhausted;
      report.exhausted_count += outcome.exhausted ? 1 : 0;
    }
  report.max_abs_error = report.error.cwiseAbs().maxCoeff();
  return report;
}

// --- sensing -------------------------------------------------------------------------

SenseResult sense_bl(std::span<const double> column_g, std::span<const double> wl_voltages, double c_bl) {
  if (column_g.size() != wl_voltages.size())
    throw Error(ErrorKind::InvalidArgument, "wl_voltages length must equal the row count");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < column_g.size(); ++k) {
    num += column_g[k] * wl_voltages[k];
    den += column_g[k];
  }
  if (!(den > 0.0)) throw Error(ErrorKind::AllZeroConductance, "column has zero total conductance");
  return {num / den, c_bl / den};
}

SenseResult sense_bl(const Crossbar& xbar, int col, std::span<const double> wl_voltages) {
  if (col < 0 || col >= xbar.cols()) throw Error(ErrorKind::InvalidArgument, "column index out of range");
  const Eigen::VectorXd column = xbar.conductances().col(col);
  return sense_bl(std::span<const double>(column.data(), static_cast<std::size_t>(column.size())), wl_voltages,
                  xbar.config().c_bl);
}

namespace {

Eigen::MatrixXd noisy_conductances(const Crossbar& xbar, ReadNoise noise) {
  Eigen::MatrixXd g = xbar.conductances();
  if (noise.sigma > 0.0 && noise.rng != nullptr)
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) *= 1.0 + noise.sigma * normal01(*noise.rng);
  return g;
}

}  // namespace

Eigen::VectorXd mvm_differential(const Crossbar& xbar, const Eigen::VectorXd& x, ReadNoise noise) {
  const auto& cfg = xbar.config();
  const auto map = xbar.diff_map();
  if (cfg.rows % 2 != 0) throw Error(ErrorKind::InvalidArgument, "differential MVM needs an even row count");
  if (x.size() != map.weight_rows) throw Error(ErrorKind::InvalidArgument, "input length must equal weight rows");

  std::vector<double> wl(static_cast<std::size_t>(cfg.rows));
  for (int i = 0; i < map.weight_rows; ++i) {
    wl[2 * i] = cfg.v_ref + x[i] * cfg.v_read_amp;
    wl[2 * i + 1] = cfg.v_ref - x[i] * cfg.v_read_amp;
  }
  const Eigen::MatrixXd g = noisy_conductances(xbar, noise);
  const double scale = cfg.v_read_amp * 2.0 * map.g_half;

  Eigen::VectorXd y(cfg.cols);
  if (cfg.line_r > 0.0) {
    std::vector<RowDrive> rows;
    for (double v : wl) rows.emplace_back(Driven{v});
    std::vector<ColumnTermination> cols(static_cast<std::size_t>(cfg.cols), Floating{});
    const auto sol = nodal_solve(g, rows, cols, cfg.line_r);
    for (int c = 0; c < cfg.cols; ++c) {
      const double den = g.col(c).sum();
      y[c] = (sol.v_bl(0, c) - cfg.v_ref) * den / scale;
    }
    return y;
  }
  for (int c = 0; c < cfg.cols; ++c) {
    const auto col = g.col(c);
    const auto sensed = sense_bl(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), wl,
                                 cfg.c_bl);
    y[c] = (sensed.v_bl - cfg.v_ref) * (cfg.c_bl / sensed.tau) / scale;
  }
  return y;
}

void mvm_differential_sparse(const Crossbar& xbar, std::span<const int> active_rows,
                             std::span<const double> x_active, ReadNoise noise, std::span<double> y) {
  const auto& cfg = xbar.config();
  if (cfg.line_r > 0.0) throw Error(ErrorKind::InvalidArgument, "sparse MVM requires line_r == 0");
  if (active_rows.size() != x_active.size() || y.size() != static_cast<std::size_t>(cfg.cols))
    throw Error(ErrorKind::InvalidArgument, "sparse MVM size mismatch");
  const auto map = xbar.diff_map();
  const auto& g = xbar.conductances();
  const auto& col_sum = xbar.column_sums();
  const bool noisy = noise.sigma > 0.0 && noise.rng != nullptr;
  const double scale = cfg.v_read_amp * 2.0 * map.g_half;

  for (int c = 0; c < cfg.cols; ++c) {
    double num = 0.0, den = col_sum[c];
    for (std::size_t a = 0; a < active_rows.size(); ++a) {
      const int r = active_rows[a];
      double gp = g(2 * r, c), gm = g(2 * r + 1, c);
      if (noisy) {
        const double dp = gp * noise.sigma * normal01(*noise.rng);
        const double dm = gm * noise.sigma * normal01(*noise.rng);
        gp += dp;
        gm += dm;
        den += dp + dm;
      }
      num += (gp - gm) * x_active[a] * cfg.v_read_amp;
    }
    if (!(den > 0.0)) throw Error(ErrorKind::AllZeroConductance, "column has zero total conductance");
    const double v_bl = cfg.v_ref + num / den;
    y[static_cast<std::size_t>(c)] = (v_bl - cfg.v_ref) * den / scale;
  }
}

// --- grid files -------------------------------------------------------------------------

void write_grid_csv(std::ostream& out, const Eigen::MatrixXd& grid, const std::string& units) {
  out << "# rows=" << grid.rows() << " cols=" << grid.cols() << " units=" << units << "\n";
  out << std::setprecision(17);
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) out << (c ? "," : "") << grid(r, c);
    out << "\n";
  }
}

Eigen::MatrixXd read_grid_csv(std::istream& in, std::string* units) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorKind::ParseError, "empty grid file");
  long rows = -1, cols = -1;
  std::string unit;
  {
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;
    if (tok != "#") throw Error(ErrorKind::ParseError, "grid header must start with '# rows='");
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
      try {
        if (key == "rows") rows = std::stol(val);
        else if (key == "cols") cols = std::stol(val);
        else if (key == "units") unit = val;
      } catch (const std::exception&) {
        throw Error(ErrorKind::ParseError, "bad grid header value '" + tok + "'");
      }
    }
  }
  if (rows < 0 || cols < 0) throw Error(ErrorKind::ParseError, "grid header needs rows= and cols=");
  Eigen::MatrixXd grid(rows, cols);
  std::string line;
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "grid ended at row " + std::to_string(r));
    std::istringstream ls(line);
    std::string cell;
    for (long c = 0; c < cols; ++c) {
      if (!std::getline(ls, cell, ','))
        throw Error(ErrorKind::ParseError, "row " + std::to_string(r + 1) + " has too few columns");
      try {
        grid(r, c) = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ParseError, "bad number at row " + std::to_string(r + 1));
      }
    }
  }
  if (units) *units = unit;
  return grid;
}

void write_margin_csv(std::ostream& out, const std::vector<MarginRow>& rows) {
  out << "n,r_on_ohm,r_off_ohm,line_r_ohm,margin_V\n" << std::setprecision(12);
  for (const auto& r : rows) out << r.n << ',' << r.r_on << ',' << r.r_off << ',' << r.line_r << ',' << r.margin << '\n';
}

}  // namespace rram
