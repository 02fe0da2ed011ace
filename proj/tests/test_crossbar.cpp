#include "oracles.hpp"

#include "rram/crossbar.hpp"
#include "rram/error.hpp"
#include "rram/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

using namespace rram;

namespace {

Eigen::MatrixXd random_weights(int r, int c, Rng& rng) {
  Eigen::MatrixXd w(r, c);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = 2.0 * uniform01(rng) - 1.0;
  return w;
}

Eigen::VectorXd random_input(int n, Rng& rng) {
  Eigen::VectorXd x(n);
  for (auto& v : x) v = uniform01(rng);
  return x;
}

Crossbar ideal_crossbar(const Eigen::MatrixXd& w, double line_r = 0.0) {
  CrossbarConfig cfg;
  cfg.rows = static_cast<int>(2 * w.rows());
  cfg.cols = static_cast<int>(w.cols());
  cfg.line_r = line_r;
  Crossbar xbar(cfg, preset_s4_dc());
  program_weights(xbar, differential_targets(w, xbar.params()), DirectWrite{});
  return xbar;
}

double pearson(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  const Eigen::ArrayXd da = a - a.mean(), db = b - b.mean();
  return (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_CASE("differential encoding") {
  const auto p = preset_s4_dc();
  const double center = 0.5 * (p.g_max + p.g_min);
  auto [gp0, gm0] = encode_differential(0.0, p);
  CHECK(gp0 == center);
  CHECK(gm0 == center);
  auto [gp1, gm1] = encode_differential(1.0, p);
  CHECK(gp1 == doctest::Approx(p.g_max).epsilon(1e-15));
  CHECK(gm1 == doctest::Approx(p.g_min).epsilon(1e-15));
  auto [gp, gm] = encode_differential(-0.5, p);
  CHECK(gp == doctest::Approx(1.36e-6).epsilon(1e-12));
  CHECK(gm == doctest::Approx(2.08e-6).epsilon(1e-12));
  CHECK(kind_of([&] { encode_differential(1.01, p); }) == ErrorKind::InvalidArgument);

  Rng rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double w = 2.0 * uniform01(rng) - 1.0;
    auto [a, b] = encode_differential(w, p);
    CHECK(a + b == doctest::Approx(2.0 * center).epsilon(1e-15));
    CHECK(a - b == doctest::Approx(w * (p.g_max - p.g_min)).epsilon(1e-12));
    CHECK(a >= p.g_min);
    CHECK(b <= p.g_max);
  }
}

TEST_CASE("target maps decode back to the weights") {
  Rng rng(8);
  const auto p = preset_s4_dc();
  const Eigen::MatrixXd w = random_weights(7, 5, rng);
  const Eigen::MatrixXd g = differential_targets(w, p);
  CHECK(g.rows() == 14);
  CHECK(decode_weights(g, p).isApprox(w, 1e-12));
}

TEST_CASE("dynamic range") {
  const auto p = preset_s4_dc();
  CHECK(effective_dynamic_range(100, 2.0 * (p.g_max - p.g_min), p) == doctest::Approx(1.0));
  CHECK(effective_dynamic_range(100, default_diff_g_min(p), p) == doctest::Approx(170.0).epsilon(1e-14));
  CHECK(p.g_max / p.g_min == doctest::Approx(2.44).epsilon(1e-14));
}

TEST_CASE("quantizer matches grid enumeration") {
  auto nearest = [](double w, int bits) {
    const int side = (1 << (bits - 1)) - 1;
    if (side == 0) return 0.0;
    w = std::clamp(w, -1.0, 1.0);
    double best = 0.0;
    for (int k = -side; k <= side; ++k) {
      const double level = static_cast<double>(k) / side;
      const double d = std::abs(level - w), db = std::abs(best - w);
      if (d < db - 1e-15 || (std::abs(d - db) <= 1e-15 && std::abs(level) < std::abs(best))) best = level;
    }
    return best;
  };
  CHECK(quantize(0.0) == 0.0);
  CHECK(quantize(1.0) == 1.0);
  CHECK(quantize(-1.0) == -1.0);
  CHECK(quantize(0.49) == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(quantize(0.5 / 7.0) == 0.0);
  CHECK(quantize(-1.5 / 7.0) == doctest::Approx(-1.0 / 7.0).epsilon(1e-15));
  Rng rng(12);
  for (int bits : {2, 3, 4, 6, 8})
    for (int k = 0; k < 2000; ++k) {
      const double w = 2.4 * uniform01(rng) - 1.2;
      CHECK(quantize(w, bits) == doctest::Approx(nearest(w, bits)).epsilon(1e-14));
    }
  int distinct = 0;
  for (int k = -1000; k <= 1000; ++k) distinct += quantize(k / 1000.0, 4) == quantize((k - 1) / 1000.0, 4) ? 0 : 1;
  CHECK(distinct + 1 == 15);
}

TEST_CASE("sense_bl weighted average") {
  const std::vector<double> g{1e-6, 3e-6};
  const std::vector<double> v{0.0, 4.0};
  const auto s = sense_bl(g, v, 1e-12);
  CHECK(s.v_bl == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(s.tau == doctest::Approx(1e-12 / 4e-6).epsilon(1e-15));
  const std::vector<double> same(2, 0.37);
  CHECK(sense_bl(g, same, 1e-12).v_bl == doctest::Approx(0.37).epsilon(1e-15));
  const std::vector<double> zero(2, 0.0);
  CHECK(kind_of([&] { sense_bl(zero, v, 1e-12); }) == ErrorKind::AllZeroConductance);

  // Single driven device read.
  const std::vector<double> col{1.2e-6, 2.0e-6, 1.0e-6, 2.4e-6};
  const double v_ref = 0.5, v_pulse = 0.1;
  std::vector<double> wl(4, v_ref);
  wl[1] += v_pulse;
  const double sum = 1.2e-6 + 2.0e-6 + 1.0e-6 + 2.4e-6;
  CHECK(sense_bl(col, wl, 1e-12).v_bl - v_ref == doctest::Approx(2.0e-6 / sum * v_pulse).epsilon(1e-12));
}

TEST_CASE("ideal MVM equals the matrix-vector product") {
  Rng rng(21);
  for (int n : {1, 4, 16, 33, 64}) {
    const Eigen::MatrixXd w = random_weights(n, n, rng);
    const auto xbar = ideal_crossbar(w);
    for (int t = 0; t < 5; ++t) {
      const Eigen::VectorXd x = random_input(n, rng);
      const Eigen::VectorXd expected = w.transpose() * x;
      const Eigen::VectorXd y = mvm_differential(xbar, x);
      CHECK((y - expected).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("MVM trivial inputs and superposition") {
  Rng rng(5);
  const auto zero_w = ideal_crossbar(Eigen::MatrixXd::Zero(8, 6));
  CHECK(mvm_differential(zero_w, random_input(8, rng)).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd w = random_weights(8, 6, rng);
  const auto xbar = ideal_crossbar(w);
  CHECK(mvm_differential(xbar, Eigen::VectorXd::Zero(8)).cwiseAbs().maxCoeff() < 1e-15);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd a = 0.5 * random_input(8, rng), b = 0.5 * random_input(8, rng);
    const Eigen::VectorXd sum = mvm_differential(xbar, a) + mvm_differential(xbar, b);
    CHECK((mvm_differential(xbar, a + b) - sum).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("sparse MVM agrees with the dense readout") {
  Rng rng(44);
  const Eigen::MatrixXd w = random_weights(12, 9, rng);
  const auto xbar = ideal_crossbar(w);
  const std::vector<int> active{1, 4, 5, 10};
  const std::vector<double> xs{1.0, 0.25, 1.0, 0.5};
  Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
  for (std::size_t k = 0; k < active.size(); ++k) x[active[k]] = xs[k];
  std::vector<double> y(9);
  mvm_differential_sparse(xbar, active, xs, {}, y);
  const Eigen::VectorXd dense = mvm_differential(xbar, x);
  for (int c = 0; c < 9; ++c) CHECK(y[c] == doctest::Approx(dense[c]).epsilon(1e-12));
}

TEST_CASE("MVM under default noise stays linear") {
  Rng rng(77);
  auto p = preset_s4_dc();
  std::vector<double> ex, me;
  for (int t = 0; t < 40; ++t) {
    const Eigen::MatrixXd w = random_weights(16, 8, rng);
    CrossbarConfig cfg;
    cfg.rows = 32;
    cfg.cols = 8;
    auto xbar = Crossbar::with_variation(cfg, p, rng());
    program_weights(xbar, differential_targets(w, p), ClosedLoop{});
    const Eigen::VectorXd x = random_input(16, rng);
    const Eigen::VectorXd y = mvm_differential(xbar, x, {p.sigma_read, &rng});
    const Eigen::VectorXd e = w.transpose() * x;
    for (int c = 0; c < 8; ++c) {
      ex.push_back(e[c]);
      me.push_back(y[c]);
    }
  }
  const double slope = oracle::ols_slope(ex, me);
  const Eigen::ArrayXd a = Eigen::Map<Eigen::ArrayXd>(ex.data(), static_cast<Eigen::Index>(ex.size()));
  const Eigen::ArrayXd b = Eigen::Map<Eigen::ArrayXd>(me.data(), static_cast<Eigen::Index>(me.size()));
  CHECK(slope > 0.97);
  CHECK(slope < 1.03);
  CHECK(pearson(a, b) * pearson(a, b) > 0.99);
}

TEST_CASE("open-loop programming") {
  const auto p = preset_s4_dc();
  CrossbarConfig cfg;
  cfg.rows = 2;
  cfg.cols = 1;
  Crossbar fresh(cfg, p);
  const auto rep = program_weights(fresh, Eigen::MatrixXd::Constant(2, 1, p.g_min), OpenLoop{});
  CHECK(rep.set_pulses.sum() == 0);

  const auto table = incremental_ltp_table(p);
  REQUIRE(table.size() == 101);
  for (std::size_t k = 1; k < table.size(); ++k) CHECK(table[k] > table[k - 1]);

  Rng rng(16);
  Eigen::MatrixXd w(16, 16);
  for (auto& v : w.reshaped()) v = quantize(2.0 * uniform01(rng) - 1.0, 4);
  cfg.rows = 32;
  cfg.cols = 16;
  Crossbar xbar(cfg, p);
  const Eigen::MatrixXd targets = differential_targets(w, p);
  program_weights(xbar, targets, OpenLoop{});
  CHECK(pearson(xbar.conductances().reshaped().array(), targets.reshaped().array()) > 0.999);
}

TEST_CASE("closed-loop programming converges on an ideal device") {
  const auto p = preset_s4_dc();
  CrossbarConfig cfg;
  cfg.rows = 16;
  cfg.cols = 8;
  Crossbar xbar(cfg, p);
  Rng rng(2);
  const Eigen::MatrixXd targets = differential_targets(random_weights(8, 8, rng), p);
  const double tol = 0.5 * default_diff_g_min(p);
  const auto rep = program_weights(xbar, targets, ClosedLoop{tol, 300});
  CHECK(rep.exhausted_count == 0);
  CHECK(rep.max_abs_error <= tol);
  CHECK(kind_of([&] { program_weights(xbar, Eigen::MatrixXd::Constant(16, 8, 3e-6), OpenLoop{}); }) ==
        ErrorKind::TargetOutOfRange);
}

TEST_CASE("closed-loop programming on varied devices reports exhaustion without failing") {
  auto p = preset_s4_dc();
  p.sigma_d2d = 0.3;
  CrossbarConfig cfg;
  cfg.rows = 16;
  cfg.cols = 16;
  auto xbar = Crossbar::with_variation(cfg, p, 9);
  const auto rep = program_weights(xbar, Eigen::MatrixXd::Constant(16, 16, p.g_max), ClosedLoop{});
  CHECK(rep.exhausted_count > 0);
  CHECK(rep.exhausted_count == rep.exhausted.count());
}

TEST_CASE("nodal solve with ideal wires reduces to the divider") {
  Rng rng(6);
  Eigen::MatrixXd g(6, 4);
  for (auto& v : g.reshaped()) v = 1e-6 + 1.44e-6 * uniform01(rng);
  std::vector<RowDrive> rows;
  std::vector<double> wl;
  for (int r = 0; r < 6; ++r) {
    wl.push_back(0.4 + 0.05 * r);
    rows.emplace_back(Driven{wl.back()});
  }
  const std::vector<ColumnTermination> cols(4, Floating{});
  const auto sol = nodal_solve(g, rows, cols, 0.0);
  for (int c = 0; c < 4; ++c) {
    std::vector<double> col(g.col(c).data(), g.col(c).data() + 6);
    CHECK(sol.v_terminal[c] == doctest::Approx(sense_bl(col, wl, 1e-12).v_bl).epsilon(1e-10));
  }
  CHECK(sol.kcl_residual < 1e-12);
}

TEST_CASE("nodal solve matches a dense MNA oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const int R = 2 + trial % 3, C = 2 + trial / 2;
    Eigen::MatrixXd g(R, C);
    for (auto& v : g.reshaped()) v = 1e-6 * (0.5 + uniform01(rng));
    const double line_r = 10.0 + 1000.0 * uniform01(rng);
    std::vector<RowDrive> rows;
    std::vector<std::optional<double>> row_v;
    for (int r = 0; r < R; ++r) {
      if (r == 1) {
        rows.emplace_back(Floating{});
        row_v.emplace_back(std::nullopt);
      } else {
        row_v.emplace_back(uniform01(rng));
        rows.emplace_back(Driven{*row_v.back()});
      }
    }
    std::vector<ColumnTermination> cols;
    std::vector<std::optional<double>> col_r;
    for (int c = 0; c < C; ++c) {
      if (c == C - 1) {
        cols.emplace_back(Floating{});
        col_r.emplace_back(std::nullopt);
      } else {
        col_r.emplace_back(1e3 + 1e5 * uniform01(rng));
        cols.emplace_back(GroundedThrough{*col_r.back()});
      }
    }
    const auto sol = nodal_solve(g, rows, cols, line_r);
    const auto ref = oracle::dense_crossbar(g, row_v, col_r, line_r);
    CHECK((sol.v_wl - ref.v_wl).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((sol.v_bl - ref.v_bl).cwiseAbs().maxCoeff() < 1e-10);
    for (int c = 0; c + 1 < C; ++c) CHECK(sol.v_terminal[c] == doctest::Approx(ref.v_term[c]).epsilon(1e-9));
    CHECK(sol.residual < 1e-10);
    CHECK(sol.kcl_residual < 1e-12);
  }
}

TEST_CASE("nodal solve hand divider") {
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(1, 1, 1e-6);
  const auto sol = nodal_solve(g, {Driven{1.0}}, {GroundedThrough{0.0}}, 1e3);
  CHECK(sol.v_wl(0, 0) - sol.v_bl(0, 0) == doctest::Approx(1e6 / (1e6 + 2e3)).epsilon(1e-12));
}

TEST_CASE("nodal solve is reciprocal") {
  Rng rng(90);
  Eigen::MatrixXd g(5, 4);
  for (auto& v : g.reshaped()) v = 1e-6 * (0.5 + uniform01(rng));
  const int i = 3, j = 2;
  std::vector<RowDrive> rows(5, Floating{});
  std::vector<ColumnTermination> cols(4, Floating{});
  rows[i] = Driven{1.0};
  cols[j] = GroundedThrough{0.0};
  const double forward = -nodal_solve(g, rows, cols, 50.0).col_injection[j];
  rows[i] = Driven{0.0};
  cols[j] = Driven{1.0};
  const double backward = -nodal_solve(g, rows, cols, 50.0).row_injection[i];
  CHECK(forward > 0.0);
  CHECK(forward == doctest::Approx(backward).epsilon(1e-10));
}

TEST_CASE("floating subnetworks are singular") {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  g(0, 0) = 1e-6;
  CHECK(kind_of([&] {
          nodal_solve(g, {Driven{1.0}, Floating{}}, {GroundedThrough{1e3}, Floating{}}, 1.0);
        }) == ErrorKind::SingularNetwork);
  g(1, 0) = g(1, 1) = 1e-6;
  CHECK_NOTHROW(nodal_solve(g, {Driven{1.0}, Floating{}}, {GroundedThrough{1e3}, Floating{}}, 1.0));
}

TEST_CASE("read margin trends") {
  MarginOptions opt;
  CHECK(read_margin(64, 4.1e5, 1e6, 2.5, opt) < read_margin(2, 4.1e5, 1e6, 2.5, opt));
  for (int n : {8, 16, 32, 64}) {
    CHECK(read_margin(n, 4.1e5, 1e7, 0.0, opt) >= read_margin(n, 4.1e5, 1e6, 0.0, opt));
    CHECK(read_margin(2 * n, 4.1e5, 1e6, 0.0, opt) < read_margin(n, 4.1e5, 1e6, 0.0, opt));
  }
  opt.bias = ReadBias::IdealSelector;
  CHECK(read_margin(16, 4.1e5, 1e6, 0.0, opt) == doctest::Approx(ideal_margin(4.1e5, 1e6, opt)).epsilon(1e-10));
  CHECK(ideal_margin(4.1e5, 1e6, opt) == doctest::Approx(0.1 * 1e4 * (1 / (1e4 + 4.1e5) - 1 / (1e4 + 1e6))));
  CHECK(kind_of([] { read_margin(1, 4.1e5, 1e6, 0.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("write voltage drop trends") {
  for (int n : {2, 16, 64}) CHECK(write_voltage_drop(n, 4.1e5, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  double prev = 0.0;
  for (double r_on : {1e3, 1e4, 1e5, 4.1e5, 1e6}) {
    const double f = write_voltage_drop(64, r_on, 2.5);
    CHECK(f > prev);
    CHECK(f < 1.0);
    prev = f;
  }
  prev = 1.0;
  for (int n : {4, 8, 16, 32, 64}) {
    const double f = write_voltage_drop(n, 1e4, 2.5);
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("grid csv round-trip and errors") {
  Rng rng(1);
  const Eigen::MatrixXd m = random_weights(3, 4, rng) * 1e-6;
  std::ostringstream os;
  write_grid_csv(os, m, "S");
  CHECK(os.str().rfind("# rows=3 cols=4 units=S\n", 0) == 0);
  std::istringstream is(os.str());
  std::string units;
  CHECK(read_grid_csv(is, &units) == m);
  CHECK(units == "S");
  std::istringstream short_grid("# rows=2 cols=2 units=S\n1,2\n");
  CHECK(kind_of([&] { read_grid_csv(short_grid); }) == ErrorKind::ParseError);
}

TEST_CASE("margin csv header") {
  std::ostringstream os;
  write_margin_csv(os, {MarginRow{8, 4.1e5, 1e6, 2.5, 0.01}});
  CHECK(os.str().rfind("n,r_on_ohm,r_off_ohm,line_r_ohm,margin_V\n8,", 0) == 0);
}
