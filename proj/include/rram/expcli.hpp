#pragma once

#include "rram/crossbar.hpp"
#include "rram/device.hpp"
#include "rram/eons.hpp"
#include "rram/error.hpp"
#include "rram/iv_analysis.hpp"
#include "rram/race.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rram::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,       // bad flags, bad config values, out-of-range arguments
  kParse = 3,       // unreadable or malformed input files
  kDegenerate = 4,  // data cannot support the requested model
  kNumeric = 5,     // solver or geometry failure
};

int exit_code(ErrorKind kind);

struct Common {
  std::filesystem::path out = "out";
  std::uint64_t seed = 7;
  int threads = 1;
  std::string preset = "S4-DC";  // preset name or key = value file

  DeviceParams device() const;
  std::filesystem::path file(const std::string& name) const;
};

// --- device ---------------------------------------------------------------------

struct DeviceOptions {
  std::string scheme = "Incremental100";
  double diameter_um = 0.0;  // 0 uses the reference device
  bool variation = false;    // sample device-to-device variation from the seed
};
struct DeviceSummary {
  std::vector<TracePoint> trace;
  std::filesystem::path csv;
};
DeviceSummary cmd_device(const Common& common, const DeviceOptions& opt);

// --- fit -------------------------------------------------------------------------

struct FitOptions {
  std::string input;
  std::string model = "all";  // direct | fn | sclc | all
  double v_max = 0.06;
  double v_min = 0.5;
  int min_segment = 3;
  double thickness_nm = 0.0;  // > 0 adds a trap-density line
  double eps_r = 40.0;
};
struct FitSummary {
  std::optional<iv::TunnelFit> direct, fn;
  std::optional<iv::SclcFit> sclc;
  std::optional<iv::TrapExtraction> traps;
  std::string report;
};
FitSummary cmd_fit(const Common& common, const FitOptions& opt);

// --- margin ----------------------------------------------------------------------

struct MarginSweep {
  std::vector<int> sizes{8, 16, 32, 64, 128};
  std::vector<double> r_on{4.1e5};
  std::vector<double> r_off{1e6, 1e7};
  std::vector<double> line_r{0.0, 2.5};
  std::vector<double> write_r_on{1e3, 1e4, 1e5, 4.1e5, 1e6};
  double v_read = 0.1;
  double v_write = 2.0;
  std::string bias = "floating";  // floating | selector
};
struct WriteDropRow {
  int n = 0;
  double r_on = 0.0, line_r = 0.0, fraction = 0.0;
};
struct MarginSummary {
  std::vector<MarginRow> margins;
  std::vector<WriteDropRow> write_drop;
};
MarginSummary cmd_margin(const Common& common, const MarginSweep& sweep);

// --- mvm -----------------------------------------------------------------------------

struct MvmOptions {
  int rows = 32;  // weight rows
  int cols = 16;
  int trials = 1000;
  bool zero_noise = false;
  double sigma_d2d = -1.0;   // < 0 keeps the preset value
  double sigma_read = -1.0;  // < 0 keeps the preset value
  std::string mode = "auto";  // auto | closed | open | direct; auto is direct at zero noise
  double line_r = 0.0;
};
struct Regression {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  std::size_t points = 0;
};
Regression fit_line(std::span<const double> x, std::span<const double> y);
struct MvmSummary {
  Regression fit;
  double max_rel_error = 0.0;  // max |measured - expected| / max |expected| per trial
  std::vector<double> expected, measured;
};
MvmSummary cmd_mvm(const Common& common, const MvmOptions& opt);

// --- train / deploy / race ------------------------------------------------------------

struct EnvOptions {
  std::vector<std::string> tracks{"data/tracks/oval.csv"};
  race::EpisodeConfig episode;
  race::LidarConfig lidar;
  int window = snn::kDefaultWindow;
};
std::vector<race::Track> load_tracks(const EnvOptions& env);
eons::RaceEvaluator make_evaluator(const EnvOptions& env);

struct TrainOptions {
  EnvOptions env;
  eons::EvolutionConfig evolution;
  std::string checkpoint = "checkpoint.json";  // relative to out; empty disables
  bool resume = false;
};
struct TrainSummary {
  eons::EvolutionState state;
  std::vector<std::string> track_names;
};
TrainSummary cmd_train(const Common& common, const TrainOptions& opt);

struct DeployOptions {
  EnvOptions env;
  std::string network;
  int bits = 4;
  int noise_seeds = 20;
  bool zero_noise = false;
  std::string mode = "closed";  // closed | open | direct
};
struct DeploySummary {
  std::vector<std::string> track_names;
  std::vector<double> exact;                   // per track
  std::vector<std::vector<double>> crossbar;   // [seed][track]
  double mean_exact = 0.0, mean_crossbar = 0.0, gap = 0.0;
  double weight_correlation = 0.0;
  bool actions_identical = false;  // first seed, all tracks
};
DeploySummary cmd_deploy(const Common& common, const DeployOptions& opt);

struct RaceOptions {
  EnvOptions env;
  std::string network;
  std::string backend = "exact";  // exact | crossbar
  int bits = 0;
};
race::EpisodeResult cmd_race(const Common& common, const RaceOptions& opt);

ProgramMode parse_mode(const std::string& name);

}  // namespace rram::cli
