#include "oracles.hpp"

#include "rram/device.hpp"
#include "rram/error.hpp"
#include "rram/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace rram;

TEST_CASE("current is odd and vanishes at zero bias") {
  const auto p = preset_s4_dc();
  const RramCell cell{1.7e-6, 1.0, 1.0};
  CHECK(current(cell, p, 0.0) == 0.0);
  for (double v : {1e-4, 0.01, 0.1, 0.5, 1.0, 2.3, 3.0}) CHECK(current(cell, p, -v) == -current(cell, p, v));
}

TEST_CASE("current at the read voltage equals g * v_read") {
  const auto p = preset_s4_dc();
  const RramCell cell{1e-6, 1.0, 1.0};
  CHECK(current(cell, p, 0.1) == doctest::Approx(1e-7).epsilon(1e-12));
}

TEST_CASE("read linearity below the read voltage stays within the small-signal bound") {
  const auto p = preset_s4_dc();
  const RramCell cell{2e-6, 1.0, 1.0};
  double worst = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double v = 0.1 * k / 100.0;
    worst = std::max(worst, std::abs(current(cell, p, v) / (cell.g * v) - 1.0));
  }
  // Limit v -> 0 of the sinh law: x / sinh(x) with x = v_read / v_nl.
  const double x = p.v_read / p.v_nl;
  const double oracle = 1.0 - x / std::sinh(x);
  CHECK(worst == doctest::Approx(oracle).epsilon(1e-3));
  CHECK(oracle == doctest::Approx(0.011465).epsilon(1e-3));
}

TEST_CASE("calibrated v_nl matches a bisection root of the nonlinearity ratio") {
  const double root = oracle::bisect([](double v) { return std::sinh(1.5 / v) / std::sinh(0.5 / v) - 15.0; }, 0.1, 2.0);
  CHECK(calibrate_v_nl(0.5, 15.0) == doctest::Approx(root).epsilon(1e-12));
  CHECK(preset_s4_dc().v_nl == doctest::Approx(0.3796628587501035).epsilon(1e-14));
  const auto p = preset_s4_dc();
  const RramCell cell{1e-6, 1.0, 1.0};
  CHECK(current(cell, p, 1.5) / current(cell, p, 0.5) == doctest::Approx(15.0).epsilon(1e-12));
}

TEST_CASE("vectorized sweep agrees with the scalar law") {
  const auto p = preset_s4_dc();
  const RramCell cell{1.3e-6, 1.0, 1.0};
  const Eigen::ArrayXd v = Eigen::ArrayXd::LinSpaced(41, -2.0, 2.0);
  const Eigen::ArrayXd i = current(cell, p, v);
  for (Eigen::Index k = 0; k < v.size(); ++k) CHECK(i[k] == doctest::Approx(current(cell, p, v[k])));
}

TEST_CASE("pulse update follows the soft-bounds law") {
  const auto p = preset_s4_dc();
  SUBCASE("set from mid-window") {
    const RramCell cell{1.5e-6, 1.0, 1.0};
    for (double v : {-0.8, -1.2, -2.0, -2.5})
      for (double w : {500e-6, 5e-3, 100e-6})
        CHECK(apply_pulse(cell, p, v, w).g == doctest::Approx(oracle::pulse(cell.g, 1.0, p, v, w)).epsilon(1e-13));
  }
  SUBCASE("reset from mid-window") {
    const RramCell cell{2.0e-6, 1.0, 1.0};
    for (double v : {0.3, 0.8, 1.5})
      CHECK(apply_pulse(cell, p, v, 500e-6).g ==
            doctest::Approx(oracle::pulse(cell.g, 1.0, p, v, 500e-6)).epsilon(1e-13));
  }
  SUBCASE("scaled cell uses its own bounds") {
    const RramCell cell{3.0e-6, 1.5, 1.1};
    const double scale = 1.5 * 1.1;
    CHECK(apply_pulse(cell, p, -2.0, 500e-6).g ==
          doctest::Approx(oracle::pulse(cell.g, scale, p, -2.0, 500e-6)).epsilon(1e-13));
  }
}

TEST_CASE("saturated and sub-threshold pulses are no-ops") {
  const auto p = preset_s4_dc();
  const RramCell top{p.g_max, 1.0, 1.0};
  CHECK(apply_pulse(top, p, -2.5, 500e-6).g == p.g_max);
  const RramCell bottom{p.g_min, 1.0, 1.0};
  CHECK(apply_pulse(bottom, p, 1.5, 500e-6).g == p.g_min);
  const RramCell mid{1.7e-6, 1.0, 1.0};
  CHECK(apply_pulse(mid, p, -0.5 * p.set_threshold, 500e-6).g == mid.g);
  CHECK(apply_pulse(mid, p, 0.5 * p.reset_threshold, 500e-6).g == mid.g);
  CHECK(apply_pulse(mid, p, 0.0, 500e-6).g == mid.g);
}

TEST_CASE("polarity: negative amplitudes set, positive amplitudes reset") {
  const auto p = preset_s4_dc();
  const RramCell mid{1.7e-6, 1.0, 1.0};
  CHECK(apply_pulse(mid, p, -1.5, 500e-6).g > mid.g);
  CHECK(apply_pulse(mid, p, +1.5, 500e-6).g < mid.g);
}

TEST_CASE("random pulse sequences keep g monotone per pulse and inside the bounds") {
  for (const auto& p : {preset_s4_dc(), preset_s4_pulse()}) {
    Rng rng(20261015);
    for (int trial = 0; trial < 50; ++trial) {
      RramCell cell = sample_device(p, rng(), 3e-6 + 7e-6 * uniform01(rng));
      const double lo = cell.g_lo(p), hi = cell.g_hi(p);
      for (int k = 0; k < 200; ++k) {
        const double v = -3.0 + 6.0 * uniform01(rng);
        const double w = 1e-5 + 1e-2 * uniform01(rng);
        const RramCell next = apply_pulse(cell, p, v, w);
        if (v < 0) CHECK(next.g >= cell.g);
        if (v > 0) CHECK(next.g <= cell.g);
        CHECK(next.g >= lo);
        CHECK(next.g <= hi);
        cell = next;
      }
    }
  }
}

TEST_CASE("a single preset pulse never spans the full window") {
  for (const auto& p : {preset_s4_dc(), preset_s4_pulse()})
    for (const auto& scheme : {PulseScheme::identical_a(), PulseScheme::identical_b(), PulseScheme::incremental_100()}) {
      RramCell lo = pristine_cell(p);
      RramCell hi{p.g_max, 1.0, 1.0};
      for (double v : scheme.set_amplitudes) CHECK(apply_pulse(lo, p, v, scheme.width).g - p.g_min < p.g_max - p.g_min);
      for (double v : scheme.reset_amplitudes) CHECK(p.g_max - apply_pulse(hi, p, v, scheme.width).g < p.g_max - p.g_min);
    }
}

TEST_CASE("pulse scheme tables") {
  const auto a = PulseScheme::identical_a();
  CHECK(a.set_amplitudes.size() == 32);
  CHECK(a.reset_amplitudes.size() == 32);
  CHECK(a.set_amplitudes.front() == -2.5);
  CHECK(a.reset_amplitudes.back() == 1.5);
  CHECK(a.width == 500e-6);
  const auto b = PulseScheme::identical_b();
  CHECK(b.set_amplitudes.front() == -2.0);
  CHECK(b.reset_amplitudes.front() == 1.0);
  CHECK(b.width == 5e-3);
  const auto inc = PulseScheme::incremental_100();
  REQUIRE(inc.set_amplitudes.size() == 100);
  REQUIRE(inc.reset_amplitudes.size() == 100);
  CHECK(inc.set_amplitudes.front() == doctest::Approx(-0.8));
  CHECK(inc.set_amplitudes.back() == doctest::Approx(-2.78));
  CHECK(inc.reset_amplitudes.front() == doctest::Approx(0.3));
  CHECK(inc.reset_amplitudes.back() == doctest::Approx(0.993));
  for (int k = 1; k < 100; ++k) {
    CHECK(inc.set_amplitudes[k] - inc.set_amplitudes[k - 1] == doctest::Approx(-0.02));
    CHECK(inc.reset_amplitudes[k] - inc.reset_amplitudes[k - 1] == doctest::Approx(0.007));
  }
  CHECK(PulseScheme::by_name("incremental100").kind == SchemeKind::Incremental100);
  CHECK_THROWS_AS(PulseScheme::by_name("Staircase"), Error);
}

namespace {

void check_staircase(const std::vector<TracePoint>& tr, std::size_t n) {
  REQUIRE(tr.size() == 2 * n);
  for (std::size_t k = 1; k < n; ++k) CHECK(tr[k].g > tr[k - 1].g);
  for (std::size_t k = n + 1; k < 2 * n; ++k) CHECK(tr[k].g < tr[k - 1].g);
}

}  // namespace

TEST_CASE("staircases are strictly monotone in each phase") {
  for (const auto& p : {preset_s4_dc(), preset_s4_pulse()}) {
    check_staircase(ltp_ltd_trace(p, PulseScheme::identical_a()), 32);
    check_staircase(ltp_ltd_trace(p, PulseScheme::identical_b()), 32);
    check_staircase(ltp_ltd_trace(p, PulseScheme::incremental_100()), 100);
  }
  CHECK(ltp_ltd_trace(preset_s4_dc(), PulseScheme{}).empty());
}

TEST_CASE("identical scheme A covers most of the window and matches the oracle trace") {
  const auto p = preset_s4_dc();
  const auto tr = ltp_ltd_trace(p, PulseScheme::identical_a());
  double g = p.g_min;
  for (int k = 0; k < 32; ++k) {
    g = oracle::pulse(g, 1.0, p, -2.5, 500e-6);
    CHECK(tr[k].g == doctest::Approx(g).epsilon(1e-12));
    CHECK(tr[k].i_read == doctest::Approx(g * p.v_read).epsilon(1e-12));
  }
  const double coverage = (tr[31].g - p.g_min) / (p.g_max - p.g_min);
  CHECK(coverage >= 0.9);
  // Constant amplitude: the gap to g_hi shrinks by (1 - k) per pulse.
  const double k = p.a_set * std::exp((2.5 - p.set_threshold) / p.v_slope_set) / (p.g_max - p.g_min);
  CHECK(coverage == doctest::Approx(1.0 - std::pow(1.0 - k, 32)).epsilon(1e-12));
  CHECK(coverage == doctest::Approx(0.9659745021286938).epsilon(1e-12));
}

TEST_CASE("trace csv header and row count") {
  std::ostringstream os;
  write_trace_csv(os, ltp_ltd_trace(preset_s4_dc(), PulseScheme::incremental_100()));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "pulse_index,voltage_V,width_s,g_S,i_read_A");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 200);
}

TEST_CASE("sample_device area scaling and determinism") {
  auto p = preset_s4_dc();
  p.sigma_d2d = 0.0;
  CHECK(sample_device(p, 1, 5e-6).d2d_factor == 1.0);
  const double ratio = sample_device(p, 1, 10e-6).g / sample_device(p, 1, 3e-6).g;
  CHECK(ratio == doctest::Approx(100.0 / 9.0).epsilon(1e-12));
  CHECK_THROWS_AS(sample_device(p, 1, 0.0), Error);
  CHECK_THROWS_AS(sample_device(p, 1, -1e-6), Error);
  p.sigma_d2d = 0.05;
  CHECK(sample_device(p, 99, 5e-6).d2d_factor == sample_device(p, 99, 5e-6).d2d_factor);
}

TEST_CASE("log R versus log area has unit negative slope") {
  auto p = preset_s4_dc();
  p.sigma_d2d = 0.0;
  std::vector<double> x, y;
  for (double d : {3e-6, 5e-6, 7e-6, 10e-6}) {
    const RramCell c = sample_device(p, 3, d);
    x.push_back(std::log(p.area_ref * c.area_scale));
    y.push_back(std::log(1.0 / c.g));
  }
  CHECK(oracle::ols_slope(x, y) == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("device-to-device factor has the configured relative spread") {
  auto p = preset_s4_dc();
  p.sigma_d2d = 0.05;
  std::vector<double> f;
  for (std::uint64_t s = 0; s < 1000; ++s) f.push_back(sample_device(p, derive_seed(11, {s}), 5e-6).d2d_factor);
  const auto [mean, sd] = oracle::mean_std(f);
  CHECK(sd / mean == doctest::Approx(0.05).epsilon(0.1));
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("preset files round-trip") {
  for (const auto& p : {preset_s4_dc(), preset_s4_pulse()}) {
    std::ostringstream os;
    write_preset(os, p);
    std::istringstream is(os.str());
    const DeviceParams q = read_preset(is);
    CHECK(q.name == p.name);
    CHECK(q.g_min == p.g_min);
    CHECK(q.g_max == p.g_max);
    CHECK(q.v_nl == p.v_nl);
    CHECK(q.a_set == p.a_set);
    CHECK(q.area_ref == p.area_ref);
  }
  std::istringstream bad("g_min = 2e-6\ng_max = 1e-6\n");
  CHECK_THROWS_AS(read_preset(bad), Error);
  std::istringstream unknown("flux = 3\n");
  CHECK_THROWS_AS(read_preset(unknown), Error);
}

TEST_CASE("shipped preset files load") {
  const auto dc = load_preset(RRAM_SOURCE_DIR "/presets/s4_dc.txt");
  CHECK(dc.g_min == 1e-6);
  CHECK(dc.g_max == 2.44e-6);
  CHECK(1.0 / dc.g_max == doctest::Approx(410e3).epsilon(1e-3));
  const auto pulse = load_preset(RRAM_SOURCE_DIR "/presets/s4_pulse.txt");
  CHECK(pulse.g_max == 0.9e-6);
}
