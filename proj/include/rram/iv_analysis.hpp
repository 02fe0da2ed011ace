#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace rram::iv {

inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m

struct IVTrace {
  Eigen::ArrayXd v;  // V, strictly increasing
  Eigen::ArrayXd i;  // A
  std::string label = "other";

  Eigen::Index size() const { return v.size(); }
  /// Throws InvalidArgument for mismatched lengths, non-increasing v or non-finite values.
  void validate() const;
};

/// CSV with header `v_V,i_A`; `#` comments allowed.
IVTrace read_trace_csv(std::istream& in);
IVTrace load_trace_csv(const std::string& path);
void write_trace_csv(std::ostream& out, const IVTrace& trace);

enum class TunnelRegime { Direct, FowlerNordheim };

struct TunnelFit {
  TunnelRegime regime = TunnelRegime::Direct;
  double coeff_a = 0.0;
  double coeff_b = 0.0;  // V; always 0 for the direct regime
  std::pair<double, double> fit_window{0.0, 0.0};
  double rms_residual = 0.0;  // relative to the rms of the fitted quantity
  int points = 0;
};

struct SclcFit {
  std::pair<double, double> breakpoints{0.0, 0.0};  // (v_1, v_tfl)
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  double alpha = 0.0;
  double sse = 0.0;  // total squared log10 residual
  double v_tfl() const { return breakpoints.second; }
};

struct TrapExtraction {
  double n_t = 0.0;  // m^-3
  double v_tfl = 0.0;
  double thickness_l = 0.0;
  double eps_r = 0.0;
};

/// i = a * v through the origin, over 0 < v <= v_max.
TunnelFit fit_direct(const IVTrace& trace, double v_max = 0.06);

/// ln(i / v^2) = ln(a) - b / v, over v >= v_min.
TunnelFit fit_fn(const IVTrace& trace, double v_min = 0.5);

/// Three-segment log-log fit; exhaustive search over sample-point breakpoint pairs.
/// Segments share their breakpoint sample and hold at least `min_segment` points each.
SclcFit fit_sclc(const IVTrace& trace, int min_segment = 3);

TrapExtraction trap_density(double v_tfl, double thickness_l, double eps_r = 40.0);
/// Inverse of trap_density: V_TFL = q N_t L^2 / (2 eps).
double trap_filled_voltage(double n_t, double thickness_l, double eps_r);

// --- synthetic traces ---------------------------------------------------------

struct DirectModel {
  double a = 1e-6;
};
struct FowlerNordheimModel {
  double a = 1e-5;
  double b = 2.0;
};
/// Continuous power-law segments: slope s1 up to v1, s2 up to v2, s3 beyond.
struct SclcModel {
  double s1 = 1.0, s2 = 2.0, s3 = 5.0;
  double v1 = 0.1, v2 = 0.6;
  double i_at_v1 = 1e-8;
};
/// Sinh device law with a fixed conductance.
struct SinhModel {
  double g = 1e-6;
  double v_read = 0.1;
  double v_nl = 0.3797;
};

using ConductionModel = std::variant<DirectModel, FowlerNordheimModel, SclcModel, SinhModel>;

double model_current(const ConductionModel& model, double v);

struct NoiseSpec {
  double sigma = 0.0;  // lognormal, relative
  std::uint64_t seed = 0;
};

IVTrace generate_synthetic(const ConductionModel& model, const Eigen::ArrayXd& grid,
                           NoiseSpec noise = {});

/// n points geometrically spaced in [lo, hi].
Eigen::ArrayXd log_grid(double lo, double hi, int n);

}  // namespace rram::iv
