#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace rram {

/// Behavioral parameters of a trilayer bulk-switching cell. Conductances in S,
/// voltages in V, widths in s, areas in m^2.
struct DeviceParams {
  std::string name = "S4-DC";
  double g_min = 1.0e-6;
  double g_max = 2.44e-6;
  double v_read = 0.1;
  double v_nl = 0.5 / std::asinh(std::sqrt(3.0));
  double set_threshold = 0.7;
  double reset_threshold = 0.25;
  double a_set = 5.472e-9;
  double a_reset = 1.4184e-8;
  double v_slope_set = 0.55;
  double v_slope_reset = 0.5;
  double width_ref = 500e-6;
  double sigma_d2d = 0.05;
  double sigma_read = 0.01;
  double area_ref = 1.9634954084936207e-11;  // 5 um diameter disc

  double diameter_ref() const { return std::sqrt(4.0 * area_ref / M_PI); }

  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
};

/// "S4-DC": DC switching window, R_on = 410 kOhm / R_off = 1 MOhm.
DeviceParams preset_s4_dc();
/// "S4-pulse": the lower conductance window the pulse experiments operate in.
DeviceParams preset_s4_pulse();
/// Looks up a built-in preset by name. Throws InvalidArgument for unknown names.
DeviceParams preset_by_name(const std::string& name);

/// Key-value preset files: `key = value` per line, `#` starts a comment.
DeviceParams read_preset(std::istream& in);
DeviceParams load_preset(const std::string& path);
void write_preset(std::ostream& out, const DeviceParams& params);

struct RramCell {
  double g = 0.0;
  double area_scale = 1.0;
  double d2d_factor = 1.0;

  double g_lo(const DeviceParams& p) const { return p.g_min * area_scale * d2d_factor; }
  double g_hi(const DeviceParams& p) const { return p.g_max * area_scale * d2d_factor; }
};

/// Nominal cell at g_lo with unit scale factors.
inline RramCell pristine_cell(const DeviceParams& p) { return RramCell{p.g_min, 1.0, 1.0}; }

/// Sinh conduction law anchored so that I(v_read) = g * v_read.
template <typename Scalar>
Scalar sinh_current(Scalar g, Scalar v, Scalar v_read, Scalar v_nl) {
  using std::sinh;
  return g * v_read * sinh(v / v_nl) / sinh(v_read / v_nl);
}

inline double current(const RramCell& cell, const DeviceParams& p, double v) {
  return sinh_current(cell.g, v, p.v_read, p.v_nl);
}

/// Vectorized I-V sweep.
Eigen::ArrayXd current(const RramCell& cell, const DeviceParams& p, const Eigen::ArrayXd& v);

/// Nonlinearity voltage scale giving I(v_hi)/I(v_hi/3) == ratio for the sinh law.
/// Closed form from sinh(3x)/sinh(x) = 3 + 4 sinh^2(x).
double calibrate_v_nl(double v_low, double ratio);

RramCell apply_pulse(const RramCell& cell, const DeviceParams& p, double v_amp, double width);

enum class SchemeKind { IdenticalA, IdenticalB, Incremental100, Custom };

struct PulseScheme {
  SchemeKind kind = SchemeKind::Custom;
  std::vector<double> set_amplitudes;    // negative
  std::vector<double> reset_amplitudes;  // positive
  double width = 500e-6;

  static PulseScheme identical_a();
  static PulseScheme identical_b();
  static PulseScheme incremental_100();
  /// Accepts "IdenticalA", "IdenticalB", "Incremental100" (case-insensitive).
  static PulseScheme by_name(const std::string& name);
};

struct TracePoint {
  int pulse_index = 0;
  double voltage = 0.0;
  double width = 0.0;
  double g = 0.0;
  double i_read = 0.0;
};

/// Full set sequence followed by the full reset sequence, starting from g_lo.
std::vector<TracePoint> ltp_ltd_trace(const DeviceParams& p, const PulseScheme& scheme);
std::vector<TracePoint> ltp_ltd_trace(const DeviceParams& p, const PulseScheme& scheme,
                                      const RramCell& start);

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);

/// Device with area scaling from its diameter (m) and a lognormal d2d factor.
RramCell sample_device(const DeviceParams& p, std::uint64_t seed, double diameter);

/// Lognormal multiplier with unit mean and relative spread `sigma`.
double lognormal_factor(double sigma, double standard_normal);

}  // namespace rram
