// rramsim: command-line driver for the device, crossbar, and racing experiments.

#include "rram/expcli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

using namespace rram;
using namespace rram::cli;

namespace {

void add_env_options(CLI::App* cmd, EnvOptions& env) {
  cmd->add_option("--tracks", env.tracks, "Track CSV files")->delimiter(',')->capture_default_str();
  cmd->add_option("--dt", env.episode.dt, "Control period (s)")->capture_default_str();
  cmd->add_option("--max-steps", env.episode.max_steps, "Step cap per episode; 0 derives it from the track")
      ->capture_default_str();
  cmd->add_option("--laps", env.episode.laps_target, "Laps that count as a full score")->capture_default_str();
  cmd->add_option("--wheelbase", env.episode.wheelbase, "Wheelbase (m)")->capture_default_str();
  cmd->add_option("--car-radius", env.episode.car_radius, "Collision radius (m)")->capture_default_str();
  cmd->add_option("--lidar-fov-deg", env.lidar.fov, "LIDAR field of view (deg)")
      ->transform([](std::string s) { return std::to_string(std::stod(s) * 3.14159265358979323846 / 180.0); })
      ->default_str("270");
  cmd->add_option("--lidar-range", env.lidar.max_range, "LIDAR range (m)")->capture_default_str();
  cmd->add_option("--window", env.window, "SNN steps per control period")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RRAM crossbar and spiking-network experiment driver"};
  app.name("rramsim");
  app.set_config("--config", "", "INI file with option values; sections name subcommands");
  app.require_subcommand(1);

  Common common;
  std::string out = common.out.string();
  app.add_option("--out", out, "Output directory")->envname("RRAMSIM_OUT")->capture_default_str();
  app.add_option("--seed", common.seed, "Global seed")->capture_default_str();
  app.add_option("--threads", common.threads, "Worker threads for fitness evaluation")
      ->envname("RRAMSIM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--preset", common.preset, "Device preset name (S4-DC, S4-pulse) or preset file")
      ->capture_default_str();

  DeviceOptions dev;
  auto* device = app.add_subcommand("device", "Multilevel conductance staircase for a pulse scheme");
  device->add_option("--scheme", dev.scheme, "IdenticalA | IdenticalB | Incremental100")
      ->check(CLI::IsMember({"IdenticalA", "IdenticalB", "Incremental100"}))
      ->capture_default_str();
  device->add_option("--diameter-um", dev.diameter_um, "Device diameter (um); 0 = reference")->capture_default_str();
  device->add_flag("--variation", dev.variation, "Sample device-to-device variation from the seed");

  FitOptions fit;
  auto* fitc = app.add_subcommand("fit", "Conduction-mechanism fits of an I-V trace");
  fitc->add_option("--input", fit.input, "CSV with v_V,i_A columns")->required();
  fitc->add_option("--model", fit.model, "direct | fn | sclc | all")->capture_default_str();
  fitc->add_option("--v-max", fit.v_max, "Upper voltage of the direct window (V)")->capture_default_str();
  fitc->add_option("--v-min", fit.v_min, "Lower voltage of the FN window (V)")->capture_default_str();
  fitc->add_option("--min-segment", fit.min_segment, "Minimum points per SCLC segment")->capture_default_str();
  fitc->add_option("--thickness-nm", fit.thickness_nm, "Film thickness for trap density (nm); 0 skips")
      ->capture_default_str();
  fitc->add_option("--eps-r", fit.eps_r, "Relative permittivity")->capture_default_str();

  MarginSweep sweep;
  auto* margin = app.add_subcommand("margin", "Read-margin and write-drop sweeps over array size");
  margin->add_option("--sizes", sweep.sizes, "Array sizes n (n x n)")->delimiter(',')->capture_default_str();
  margin->add_option("--r-on", sweep.r_on, "LRS resistances (Ohm)")->delimiter(',')->capture_default_str();
  margin->add_option("--r-off", sweep.r_off, "HRS resistances (Ohm)")->delimiter(',')->capture_default_str();
  margin->add_option("--line-r", sweep.line_r, "Wire resistance per segment (Ohm)")->delimiter(',')->capture_default_str();
  margin->add_option("--write-r-on", sweep.write_r_on, "LRS values for the write-drop sweep (Ohm)")
      ->delimiter(',')
      ->capture_default_str();
  margin->add_option("--v-read", sweep.v_read, "Read voltage (V)")->capture_default_str();
  margin->add_option("--v-write", sweep.v_write, "Write voltage (V)")->capture_default_str();
  margin->add_option("--bias", sweep.bias, "floating | selector")->capture_default_str();

  MvmOptions mvm;
  auto* mvmc = app.add_subcommand("mvm", "Measured vs expected differential MVM");
  mvmc->add_option("--rows", mvm.rows, "Weight rows")->capture_default_str();
  mvmc->add_option("--cols", mvm.cols, "Columns")->capture_default_str();
  mvmc->add_option("--trials", mvm.trials, "Random weight maps")->capture_default_str();
  mvmc->add_flag("--zero-noise", mvm.zero_noise, "Disable variation and read noise");
  mvmc->add_option("--sigma-d2d", mvm.sigma_d2d, "Override device-to-device sigma")->capture_default_str();
  mvmc->add_option("--sigma-read", mvm.sigma_read, "Override read-noise sigma")->capture_default_str();
  mvmc->add_option("--mode", mvm.mode, "auto | closed | open | direct")->capture_default_str();
  mvmc->add_option("--line-r", mvm.line_r, "Wire resistance per segment (Ohm)")->capture_default_str();

  TrainOptions train;
  auto* trainc = app.add_subcommand("train", "Evolve a racing network");
  add_env_options(trainc, train.env);
  auto& evo = train.evolution;
  trainc->add_option("--population", evo.population)->capture_default_str();
  trainc->add_option("--generations", evo.generations)->capture_default_str();
  trainc->add_option("--tournament", evo.tournament_size)->capture_default_str();
  trainc->add_option("--crossover-rate", evo.crossover_rate)->capture_default_str();
  trainc->add_option("--mutation-rate", evo.mutation_rate)->capture_default_str();
  trainc->add_option("--duplication-rate", evo.rates.duplication)->capture_default_str();
  trainc->add_option("--elitism", evo.elitism)->capture_default_str();
  trainc->add_option("--init-edges", evo.init_edges)->capture_default_str();
  trainc->add_option("--init-hidden-max", evo.init_hidden_max)->capture_default_str();
  trainc->add_option("--checkpoint", train.checkpoint, "Checkpoint file inside --out; empty disables")
      ->capture_default_str();
  trainc->add_flag("--resume", train.resume, "Continue from the checkpoint");

  DeployOptions deploy;
  auto* deployc = app.add_subcommand("deploy", "Compare exact and crossbar execution of a network");
  add_env_options(deployc, deploy.env);
  deployc->add_option("--network", deploy.network, "Network JSON")->required();
  deployc->add_option("--bits", deploy.bits, "Weight quantization bits")->capture_default_str();
  deployc->add_option("--noise-seeds", deploy.noise_seeds, "Crossbar instances to sample")->capture_default_str();
  deployc->add_flag("--zero-noise", deploy.zero_noise, "Ideal programming, no variation, no read noise");
  deployc->add_option("--mode", deploy.mode, "closed | open | direct")->capture_default_str();

  RaceOptions race_opt;
  auto* racec = app.add_subcommand("race", "Drive one episode and log the trajectory");
  add_env_options(racec, race_opt.env);
  racec->add_option("--network", race_opt.network, "Network JSON")->required();
  racec->add_option("--backend", race_opt.backend, "exact | crossbar")->capture_default_str();
  racec->add_option("--bits", race_opt.bits, "Weight quantization bits; 0 keeps full precision")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  common.out = out;

  try {
    CLI::App* used = app.get_subcommands().front();
    if (used == device) {
      const auto s = cmd_device(common, dev);
      std::cout << "wrote " << s.csv.string() << " (" << s.trace.size() << " pulses)\n";
    } else if (used == fitc) {
      std::cout << cmd_fit(common, fit).report;
    } else if (used == margin) {
      const auto s = cmd_margin(common, sweep);
      std::cout << "margin rows " << s.margins.size() << ", write-drop rows " << s.write_drop.size() << "\n";
    } else if (used == mvmc) {
      const auto s = cmd_mvm(common, mvm);
      std::cout << std::setprecision(6) << "slope=" << s.fit.slope << " intercept=" << s.fit.intercept
                << " r2=" << s.fit.r2 << " points=" << s.fit.points << "\n";
    } else if (used == trainc) {
      const auto s = cmd_train(common, train);
      std::cout << std::setprecision(6) << "generations=" << s.state.generation
                << " best=" << s.state.best.fitness.mean << "\n";
    } else if (used == deployc) {
      const auto s = cmd_deploy(common, deploy);
      std::cout << std::setprecision(6) << "exact=" << s.mean_exact << " crossbar=" << s.mean_crossbar
                << " gap=" << s.gap << " weight_corr=" << s.weight_correlation << "\n";
    } else if (used == racec) {
      const auto r = cmd_race(common, race_opt);
      std::cout << std::setprecision(6) << "score=" << r.score << " steps=" << r.steps
                << " crashed=" << r.crashed << " finished=" << r.finished << "\n";
    }
    std::ofstream manifest(common.file("manifest_" + used->get_name() + ".ini"));
    manifest << app.config_to_str(true, true);
  } catch (const Error& e) {
    std::cerr << "rramsim: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "rramsim: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
