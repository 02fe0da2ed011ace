#pragma once

#include "rram/device.hpp"
#include "rram/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace rram {

/// diff_g_min back-solved so the differential dynamic range equals 170.
inline double default_diff_g_min(const DeviceParams& p) { return 2.0 * (p.g_max - p.g_min) / 170.0; }

struct CrossbarConfig {
  int rows = 32;             // physical rows; two per weight row
  int cols = 16;
  double line_r = 0.0;       // Ohm per wire segment
  double v_ref = 0.5;        // V
  double v_read_amp = 0.1;   // V, the differential read swing
  double v_pulse = 0.1;      // V, single-device read pulse
  double c_bl = 1e-12;       // F
  double diff_g_min = 0.0;   // S; <= 0 selects default_diff_g_min()

  void validate(const DeviceParams& p, bool differential = true) const;
  double resolved_diff_g_min(const DeviceParams& p) const {
    return diff_g_min > 0.0 ? diff_g_min : default_diff_g_min(p);
  }
};

/// Row-differential mapping constants: G+ = center + w*half, G- = center - w*half.
struct DifferentialMap {
  int weight_rows = 0;
  double g_center = 0.0;
  double g_half = 0.0;

  static DifferentialMap from(const DeviceParams& p, int physical_rows) {
    return {physical_rows / 2, 0.5 * (p.g_max + p.g_min), 0.5 * (p.g_max - p.g_min)};
  }
};

class Crossbar {
 public:
  Crossbar(CrossbarConfig config, DeviceParams params);

  /// Crossbar whose cells carry lognormal device-to-device window factors.
  static Crossbar with_variation(CrossbarConfig config, DeviceParams params, std::uint64_t seed);

  const CrossbarConfig& config() const { return config_; }
  const DeviceParams& params() const { return params_; }
  int rows() const { return config_.rows; }
  int cols() const { return config_.cols; }
  DifferentialMap diff_map() const { return DifferentialMap::from(params_, config_.rows); }

  RramCell cell(int r, int c) const { return {g_(r, c), 1.0, scale_(r, c)}; }
  void set_cell(int r, int c, const RramCell& cell);
  /// Writes a conductance directly, clamped into the cell's window.
  void set_conductance(int r, int c, double g);

  const Eigen::MatrixXd& conductances() const { return g_; }
  const Eigen::MatrixXd& window_factors() const { return scale_; }
  /// Column sums of the stored conductances.
  const Eigen::VectorXd& column_sums() const { return col_sum_; }

 private:
  void refresh_sums();

  CrossbarConfig config_;
  DeviceParams params_;
  Eigen::MatrixXd g_;
  Eigen::MatrixXd scale_;
  Eigen::VectorXd col_sum_;
};

// --- weight encoding ------------------------------------------------------------

std::pair<double, double> encode_differential(double w, const DeviceParams& p);

/// Physical target map (2*R x C) for a weight matrix (R x C) in [-1, 1].
Eigen::MatrixXd differential_targets(const Eigen::MatrixXd& weights, const DeviceParams& p);
/// (G+ - G-) / (2 * g_half) for every row pair.
Eigen::MatrixXd decode_weights(const Eigen::MatrixXd& conductances, const DeviceParams& p);

/// 2 (g_max - g_min) / diff_g_min.
double effective_dynamic_range(int levels, double diff_g_min, const DeviceParams& p);

/// Nearest level of the (2^bits - 1)-level grid spanning [-1, 1] symmetrically
/// and containing 0. Ties round toward zero; inputs are clamped to [-1, 1].
inline double quantize(double w, int bits = 4) {
  const double levels_per_side = static_cast<double>((1 << (bits - 1)) - 1);
  if (levels_per_side == 0.0) return 0.0;
  const double clamped = std::max(-1.0, std::min(1.0, w));
  const double scaled = std::abs(clamped) * levels_per_side;
  const double k = std::ceil(scaled - 0.5);
  return std::copysign(k / levels_per_side, clamped) + 0.0;
}

template <typename Derived>
auto quantize(const Eigen::MatrixBase<Derived>& w, int bits = 4) {
  return w.unaryExpr([bits](typename Derived::Scalar x) { return quantize(x, bits); }).eval();
}

// --- programming ------------------------------------------------------------------

struct OpenLoop {};
struct ClosedLoop {
  double tolerance = 0.0;  // S; <= 0 selects diff_g_min / 2
  int budget = 300;
};
/// Ideal write: each cell set to its target without pulse dynamics.
struct DirectWrite {};
using ProgramMode = std::variant<OpenLoop, ClosedLoop, DirectWrite>;

struct ProgramReport {
  Eigen::MatrixXd error;       // final g - target (S)
  Eigen::MatrixXi set_pulses;
  Eigen::MatrixXi reset_pulses;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> exhausted;  // ClosedLoop only
  int exhausted_count = 0;
  double max_abs_error = 0.0;
};

/// Predicted conductance after k pulses of the Incremental100 set ladder from a
/// pristine nominal cell, k = 0..100.
std::vector<double> incremental_ltp_table(const DeviceParams& p);

ProgramReport program_weights(Crossbar& xbar, const Eigen::MatrixXd& targets, const ProgramMode& mode);

// --- sensing ----------------------------------------------------------------------

struct SenseResult {
  double v_bl = 0.0;
  double tau = 0.0;
};

/// Steady-state bit-line voltage of a capacitively sensed column: the
/// conductance-weighted average of the word-line voltages.
SenseResult sense_bl(std::span<const double> column_g, std::span<const double> wl_voltages, double c_bl);
SenseResult sense_bl(const Crossbar& xbar, int col, std::span<const double> wl_voltages);

struct ReadNoise {
  double sigma = 0.0;  // relative per-cell, per-read
  Rng* rng = nullptr;
};

/// Differential MVM: y_j = sum_i w_ij x_i recovered from the sensed BL voltages.
/// x has one entry per weight row. Uses nodal_solve when line_r > 0.
Eigen::VectorXd mvm_differential(const Crossbar& xbar, const Eigen::VectorXd& x, ReadNoise noise = {});

/// Same decode for a sparse set of driven weight rows (all other pairs idle at
/// v_ref). Read noise on idle cells cancels in the decoded output and is not drawn.
/// Requires line_r == 0.
void mvm_differential_sparse(const Crossbar& xbar, std::span<const int> active_rows,
                             std::span<const double> x_active, ReadNoise noise, std::span<double> y);

// --- nodal analysis -----------------------------------------------------------------

struct Floating {};
struct GroundedThrough {
  double resistance = 0.0;
};
struct Driven {
  double voltage = 0.0;
};
using RowDrive = std::variant<Floating, Driven>;
using ColumnTermination = std::variant<Floating, GroundedThrough, Driven>;

struct NodalSolution {
  Eigen::MatrixXd v_wl;           // word-line node voltage at each cell
  Eigen::MatrixXd v_bl;           // bit-line node voltage at each cell
  Eigen::VectorXd v_terminal;     // column terminal (sense) node voltages
  Eigen::MatrixXd cell_current;   // WL -> BL through each cell (A)
  Eigen::VectorXd row_injection;  // current delivered by each row driver (A)
  Eigen::VectorXd col_injection;  // current delivered by each column termination (A)
  double residual = 0.0;          // ||A v - b|| / ||b||
  double kcl_residual = 0.0;      // |sum injections| / sum |injections|
};

/// Steady-state resistive network: row drivers at column 0, column terminals at
/// row 0, line_r per wire segment, cells as linear conductances.
NodalSolution nodal_solve(const Eigen::MatrixXd& g, const std::vector<RowDrive>& rows,
                          const std::vector<ColumnTermination>& cols, double line_r);
NodalSolution nodal_solve(const Crossbar& xbar, const std::vector<RowDrive>& rows,
                          const std::vector<ColumnTermination>& cols, double line_r);

enum class ReadBias {
  FloatingLines,  // selector-less array, unselected lines left floating
  IdealSelector,  // only the selected cell conducts
};

struct MarginOptions {
  double v_read = 0.1;
  double r_sense = 1e4;  // Ohm, fixed sense load on the selected column
  ReadBias bias = ReadBias::FloatingLines;
  bool background_lrs = true;  // adversarial background state
};

/// Sensed-voltage separation between LRS and HRS targets at the far corner.
double read_margin(int n, double r_on, double r_off, double line_r, const MarginOptions& opt = {});
/// Ideal two-state divider difference, no wires and no sneak paths.
double ideal_margin(double r_on, double r_off, const MarginOptions& opt = {});

/// Fraction of the write voltage across the far-corner cell under V/2 biasing.
double write_voltage_drop(int n, double r_on, double line_r, double v_write = 2.0);

// --- files --------------------------------------------------------------------------

/// Row-major CSV grid with a `# rows=R cols=C units=U` header line.
void write_grid_csv(std::ostream& out, const Eigen::MatrixXd& grid, const std::string& units = "S");
Eigen::MatrixXd read_grid_csv(std::istream& in, std::string* units = nullptr);

struct MarginRow {
  int n = 0;
  double r_on = 0.0, r_off = 0.0, line_r = 0.0, margin = 0.0;
};
void write_margin_csv(std::ostream& out, const std::vector<MarginRow>& rows);

}  // namespace rram
