#include "rram/expcli.hpp"

#include "rram/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace rram::cli {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::TargetOutOfRange:
      return kUsage;
    case ErrorKind::ParseError:
      return kParse;
    case ErrorKind::InsufficientData:
    case ErrorKind::NonPositiveCurrent:
    case ErrorKind::DegenerateFit:
      return kDegenerate;
    case ErrorKind::AllZeroConductance:
    case ErrorKind::SingularNetwork:
    case ErrorKind::GeometryError:
    case ErrorKind::PoseOutsideTrack:
    case ErrorKind::BackendFault:
      return kNumeric;
    case ErrorKind::WrongBeamCount:
      return kFailure;
  }
  return kFailure;
}

DeviceParams Common::device() const {
  if (fs::exists(preset) && fs::is_regular_file(preset)) return load_preset(preset);
  return preset_by_name(preset);
}

fs::path Common::file(const std::string& name) const {
  fs::create_directories(out);
  return out / name;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  return f;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

ProgramMode parse_mode(const std::string& name) {
  if (name == "closed") return ClosedLoop{};
  if (name == "open") return OpenLoop{};
  if (name == "direct") return DirectWrite{};
  throw Error(ErrorKind::InvalidArgument, "unknown programming mode '" + name + "' (closed|open|direct)");
}

// --- device -----------------------------------------------------------------------------

DeviceSummary cmd_device(const Common& common, const DeviceOptions& opt) {
  const DeviceParams p = common.device();
  const PulseScheme scheme = PulseScheme::by_name(opt.scheme);
  const double diameter = opt.diameter_um > 0.0 ? opt.diameter_um * 1e-6 : p.diameter_ref();
  RramCell cell = sample_device(p, derive_seed(common.seed, {0xde1ce}), diameter);
  if (!opt.variation) cell.d2d_factor = 1.0;
  cell.g = cell.g_lo(p);

  DeviceSummary s;
  s.trace = ltp_ltd_trace(p, scheme, cell);
  s.csv = common.file("device_" + opt.scheme + ".csv");
  auto out = open_out(s.csv);
  write_trace_csv(out, s.trace);

  svg::Plot plot;
  plot.title = opt.scheme + " conductance staircase";
  plot.x_label = "pulse number";
  plot.y_label = "conductance (uS)";
  std::vector<double> x, y;
  for (const auto& t : s.trace) {
    x.push_back(t.pulse_index);
    y.push_back(t.g * 1e6);
  }
  plot.add(p.name, x, y, svg::Style::Steps);
  plot.save(common.file("device_" + opt.scheme + ".svg").string());
  return s;
}

// --- fit ---------------------------------------------------------------------------------

FitSummary cmd_fit(const Common& common, const FitOptions& opt) {
  static const std::vector<std::string> kModels{"direct", "fn", "sclc", "all"};
  if (std::find(kModels.begin(), kModels.end(), opt.model) == kModels.end())
    throw Error(ErrorKind::InvalidArgument, "unknown model '" + opt.model + "' (direct|fn|sclc|all)");
  const iv::IVTrace trace = iv::load_trace_csv(opt.input);
  const bool all = opt.model == "all";

  FitSummary s;
  std::ostringstream rep;
  rep << std::setprecision(10);
  rep << "input = " << opt.input << "\n";
  rep << "points = " << trace.v.size() << "\n";

  auto attempt = [&](const std::string& name, auto&& fn) {
    if (!all && opt.model != name) return;
    try {
      fn();
    } catch (const Error& e) {
      if (!all) throw;
      rep << name << ".error = " << e.what() << "\n";
    }
  };
  attempt("direct", [&] {
    s.direct = iv::fit_direct(trace, opt.v_max);
    rep << "direct.a_S = " << s.direct->coeff_a << "\n"
        << "direct.window_V = " << s.direct->fit_window.first << " " << s.direct->fit_window.second << "\n"
        << "direct.rms_residual = " << s.direct->rms_residual << "\n";
  });
  attempt("fn", [&] {
    s.fn = iv::fit_fn(trace, opt.v_min);
    rep << "fn.a = " << s.fn->coeff_a << "\n"
        << "fn.b_V = " << s.fn->coeff_b << "\n"
        << "fn.window_V = " << s.fn->fit_window.first << " " << s.fn->fit_window.second << "\n"
        << "fn.rms_residual = " << s.fn->rms_residual << "\n";
  });
  attempt("sclc", [&] {
    s.sclc = iv::fit_sclc(trace, opt.min_segment);
    rep << "sclc.slopes = " << s.sclc->s1 << " " << s.sclc->s2 << " " << s.sclc->s3 << "\n"
        << "sclc.alpha = " << s.sclc->alpha << "\n"
        << "sclc.v1_V = " << s.sclc->breakpoints.first << "\n"
        << "sclc.v_tfl_V = " << s.sclc->v_tfl() << "\n"
        << "sclc.sse = " << s.sclc->sse << "\n";
    if (opt.thickness_nm > 0.0) {
      s.traps = iv::trap_density(s.sclc->v_tfl(), opt.thickness_nm * 1e-9, opt.eps_r);
      rep << "traps.n_t_m3 = " << s.traps->n_t << "\n";
    }
  });
  s.report = rep.str();
  open_out(common.file("fit_report.txt")) << s.report;

  svg::Plot plot;
  plot.title = "I-V fit overlay";
  plot.x_label = "|V| (V)";
  plot.y_label = "|I| (A)";
  plot.log_x = plot.log_y = true;
  std::vector<double> vx, iy;
  for (Eigen::Index k = 0; k < trace.v.size(); ++k) {
    vx.push_back(std::abs(trace.v[k]));
    iy.push_back(std::abs(trace.i[k]));
  }
  plot.add("data", vx, iy, svg::Style::Scatter);
  if (s.direct) {
    std::vector<double> y;
    for (double v : vx) y.push_back(s.direct->coeff_a * v);
    plot.add("direct", vx, y);
  }
  if (s.fn) {
    std::vector<double> y;
    for (double v : vx) y.push_back(s.fn->coeff_a * v * v * std::exp(-s.fn->coeff_b / v));
    plot.add("FN", vx, y);
  }
  if (s.sclc) {
    const double lo = *std::min_element(iy.begin(), iy.end());
    const double hi = *std::max_element(iy.begin(), iy.end());
    plot.add("V_TFL", {s.sclc->v_tfl(), s.sclc->v_tfl()}, {lo, hi});
  }
  plot.save(common.file("fit_overlay.svg").string());
  return s;
}

// --- margin ------------------------------------------------------------------------------

MarginSummary cmd_margin(const Common& common, const MarginSweep& sweep) {
  MarginOptions mo;
  mo.v_read = sweep.v_read;
  if (sweep.bias == "floating") mo.bias = ReadBias::FloatingLines;
  else if (sweep.bias == "selector") mo.bias = ReadBias::IdealSelector;
  else throw Error(ErrorKind::InvalidArgument, "unknown bias '" + sweep.bias + "' (floating|selector)");

  MarginSummary s;
  for (double lr : sweep.line_r)
    for (double ron : sweep.r_on)
      for (double roff : sweep.r_off)
        for (int n : sweep.sizes) s.margins.push_back({n, ron, roff, lr, read_margin(n, ron, roff, lr, mo)});
  for (double lr : sweep.line_r)
    for (double ron : sweep.write_r_on)
      for (int n : sweep.sizes) s.write_drop.push_back({n, ron, lr, write_voltage_drop(n, ron, lr, sweep.v_write)});

  {
    auto out = open_out(common.file("margin.csv"));
    write_margin_csv(out, s.margins);
  }
  {
    auto out = open_out(common.file("write_drop.csv"));
    out << "n,r_on_ohm,line_r_ohm,fraction\n" << std::setprecision(12);
    for (const auto& r : s.write_drop) out << r.n << ',' << r.r_on << ',' << r.line_r << ',' << r.fraction << '\n';
  }

  svg::Plot plot;
  plot.title = "read margin vs array size";
  plot.x_label = "array size n";
  plot.y_label = "margin (V)";
  plot.log_x = plot.log_y = true;
  std::map<std::tuple<double, double, double>, std::pair<std::vector<double>, std::vector<double>>> curves;
  for (const auto& r : s.margins) {
    auto& c = curves[{r.line_r, r.r_on, r.r_off}];
    c.first.push_back(r.n);
    c.second.push_back(r.margin);
  }
  for (auto& [key, xy] : curves) {
    std::ostringstream name;
    name << "Roff=" << std::get<2>(key) / 1e6 << "M, r=" << std::get<0>(key);
    plot.add(name.str(), xy.first, xy.second);
  }
  plot.save(common.file("margin.svg").string());
  return s;
}

// --- mvm -------------------------------------------------------------------------------------

Regression fit_line(std::span<const double> x, std::span<const double> y) {
  Regression r;
  r.points = x.size();
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InsufficientData, "regression needs >= 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) throw Error(ErrorKind::DegenerateFit, "regression abscissa has zero variance");
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - (r.intercept + r.slope * x[k]);
    sse += e * e;
  }
  r.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return r;
}

MvmSummary cmd_mvm(const Common& common, const MvmOptions& opt) {
  if (opt.rows < 1 || opt.cols < 1 || opt.trials < 1)
    throw Error(ErrorKind::InvalidArgument, "rows, cols and trials must be positive");
  DeviceParams p = common.device();
  if (opt.sigma_d2d >= 0.0) p.sigma_d2d = opt.sigma_d2d;
  if (opt.sigma_read >= 0.0) p.sigma_read = opt.sigma_read;
  if (opt.zero_noise) p.sigma_d2d = p.sigma_read = 0.0;
  const ProgramMode mode = opt.mode == "auto" ? (opt.zero_noise ? ProgramMode{DirectWrite{}} : ProgramMode{ClosedLoop{}})
                                              : parse_mode(opt.mode);
  CrossbarConfig cfg;
  cfg.rows = 2 * opt.rows;
  cfg.cols = opt.cols;
  cfg.line_r = opt.line_r;

  MvmSummary s;
  std::vector<int> trial_of;
  for (int t = 0; t < opt.trials; ++t) {
    Rng rng = make_rng(common.seed, {0x3717, static_cast<std::uint64_t>(t)});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Eigen::MatrixXd w = Eigen::MatrixXd::NullaryExpr(opt.rows, opt.cols, [&] { return u(rng); });
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(opt.rows, [&] { return u(rng); });
    Crossbar xbar = p.sigma_d2d > 0.0 ? Crossbar::with_variation(cfg, p, derive_seed(common.seed, {0xd2d, static_cast<std::uint64_t>(t)}))
                                      : Crossbar(cfg, p);
    program_weights(xbar, differential_targets(w, p), mode);
    const Eigen::VectorXd expected = w.transpose() * x;
    const Eigen::VectorXd measured = mvm_differential(xbar, x, ReadNoise{p.sigma_read, &rng});
    const double scale = expected.cwiseAbs().maxCoeff();
    if (scale > 0.0) s.max_rel_error = std::max(s.max_rel_error, (measured - expected).cwiseAbs().maxCoeff() / scale);
    for (int c = 0; c < opt.cols; ++c) {
      s.expected.push_back(expected[c]);
      s.measured.push_back(measured[c]);
      trial_of.push_back(t);
    }
  }
  s.fit = fit_line(s.expected, s.measured);

  {
    auto out = open_out(common.file("mvm_scatter.csv"));
    out << "trial,column,expected,measured\n" << std::setprecision(12);
    for (std::size_t k = 0; k < s.expected.size(); ++k)
      out << trial_of[k] << ',' << k % static_cast<std::size_t>(opt.cols) << ',' << s.expected[k] << ','
          << s.measured[k] << '\n';
  }
  {
    auto out = open_out(common.file("mvm_stats.txt"));
    out << std::setprecision(12) << "slope = " << s.fit.slope << "\nintercept = " << s.fit.intercept
        << "\nr2 = " << s.fit.r2 << "\npoints = " << s.fit.points << "\nmax_rel_error = " << s.max_rel_error << "\n";
  }
  svg::Plot plot;
  plot.title = "measured vs expected MVM";
  plot.x_label = "expected";
  plot.y_label = "measured";
  plot.add("outputs", s.expected, s.measured, svg::Style::Scatter);
  const auto [lo, hi] = std::minmax_element(s.expected.begin(), s.expected.end());
  plot.add("y = x", {*lo, *hi}, {*lo, *hi});
  plot.save(common.file("mvm_scatter.svg").string());
  return s;
}

// --- environment ---------------------------------------------------------------------------

std::vector<race::Track> load_tracks(const EnvOptions& env) {
  if (env.tracks.empty()) throw Error(ErrorKind::InvalidArgument, "at least one track is required");
  std::vector<race::Track> tracks;
  for (const auto& path : env.tracks) tracks.push_back(race::load_track(path, env.episode.car_radius));
  return tracks;
}

eons::RaceEvaluator make_evaluator(const EnvOptions& env) {
  eons::RaceEvaluator ev;
  ev.tracks = load_tracks(env);
  ev.episode = env.episode;
  ev.lidar = env.lidar;
  ev.window = env.window;
  return ev;
}

// --- train -----------------------------------------------------------------------------------

TrainSummary cmd_train(const Common& common, const TrainOptions& opt) {
  const auto evaluator = make_evaluator(opt.env);
  eons::EvolutionConfig cfg = opt.evolution;
  cfg.seed = common.seed;
  eons::EvolveOptions eo;
  eo.threads = common.threads;
  if (!opt.checkpoint.empty()) eo.checkpoint_path = common.file(opt.checkpoint).string();

  std::optional<eons::EvolutionState> resume;
  if (opt.resume) {
    if (eo.checkpoint_path.empty() || !fs::exists(eo.checkpoint_path))
      throw Error(ErrorKind::InvalidArgument, "--resume needs an existing checkpoint");
    resume = eons::load_checkpoint(eo.checkpoint_path);
  }
  TrainSummary s;
  s.state = eons::evolve(cfg, std::cref(evaluator), eo, std::move(resume));
  for (const auto& t : opt.env.tracks) s.track_names.push_back(stem(t));

  snn::save_network(common.file("best_network.json").string(), s.state.best.genome.decode());
  eons::write_trace_csv(common.file("trace.csv").string(), s.state.trace);
  {
    auto out = open_out(common.file("scores.csv"));
    out << "track,score\n" << std::setprecision(10);
    for (std::size_t k = 0; k < s.track_names.size(); ++k)
      out << s.track_names[k] << ',' << s.state.best.fitness.per_track.at(k) << '\n';
  }
  svg::Plot plot;
  plot.title = "evolution trace";
  plot.x_label = "generation";
  plot.y_label = "fitness";
  std::vector<double> g, best, mean;
  for (const auto& r : s.state.trace) {
    g.push_back(r.generation);
    best.push_back(r.best_fitness);
    mean.push_back(r.mean_fitness);
  }
  plot.add("best so far", g, best);
  plot.add("population mean", g, mean);
  plot.save(common.file("trace.svg").string());
  return s;
}

// --- deploy ----------------------------------------------------------------------------------

namespace {

double correlation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::ArrayXd x = a.reshaped().array() - a.mean();
  const Eigen::ArrayXd y = b.reshaped().array() - b.mean();
  const double den = std::sqrt((x * x).sum() * (y * y).sum());
  return den > 0.0 ? (x * y).sum() / den : 1.0;
}

}  // namespace

DeploySummary cmd_deploy(const Common& common, const DeployOptions& opt) {
  if (opt.bits < 1 || opt.noise_seeds < 1) throw Error(ErrorKind::InvalidArgument, "bits and noise seeds must be >= 1");
  const snn::Network net = snn::load_network(opt.network);
  auto exact = make_evaluator(opt.env);
  exact.quantize_bits = opt.bits;

  snn::CrossbarDeployment dep;
  dep.params = common.device();
  dep.seed = common.seed;
  dep.mode = opt.zero_noise ? ProgramMode{DirectWrite{}} : parse_mode(opt.mode);
  dep.device_variation = !opt.zero_noise;
  dep.read_noise = !opt.zero_noise;
  auto analog = exact;
  analog.crossbar = dep;

  DeploySummary s;
  for (const auto& t : opt.env.tracks) s.track_names.push_back(stem(t));
  const auto prepared = exact.prepare(net);
  const auto& tables = snn::ActionTables::standard();
  std::vector<int> hist_exact(tables.steering.size() + tables.speed.size());
  std::vector<int> hist_analog(hist_exact.size());
  auto tally = [&](std::vector<int>& h, const std::vector<snn::Action>& actions) {
    for (const auto& a : actions) {
      ++h[static_cast<std::size_t>(a.steering_index)];
      ++h[tables.steering.size() + static_cast<std::size_t>(a.speed_index)];
    }
  };

  s.actions_identical = true;
  for (const auto& track : exact.tracks) {
    const auto re = exact.episode_on(prepared, track, 0, {false, true});
    s.exact.push_back(re.score);
    tally(hist_exact, re.actions);
    const auto ra = analog.episode_on(prepared, track, 0, {false, true});
    tally(hist_analog, ra.actions);
    s.actions_identical = s.actions_identical && re.actions.size() == ra.actions.size() &&
                          std::equal(re.actions.begin(), re.actions.end(), ra.actions.begin(),
                                     [](const snn::Action& a, const snn::Action& b) {
                                       return a.steering_index == b.steering_index && a.speed_index == b.speed_index;
                                     });
  }
  s.mean_exact = std::accumulate(s.exact.begin(), s.exact.end(), 0.0) / static_cast<double>(s.exact.size());
  double total = 0.0;
  for (int seed = 0; seed < opt.noise_seeds; ++seed) {
    const auto rec = analog.evaluate(net, static_cast<std::uint64_t>(seed));
    s.crossbar.push_back(rec.per_track);
    total += rec.mean;
  }
  s.mean_crossbar = total / opt.noise_seeds;
  s.gap = s.mean_exact - s.mean_crossbar;

  const auto compiled = snn::CompiledNetwork::compile(prepared);
  auto first = dep;
  first.seed = derive_seed(dep.seed, {0});
  const snn::CrossbarBackend backend(compiled, first);
  s.weight_correlation = correlation(backend.target_weights(), backend.programmed_weights());
  {
    auto out = open_out(common.file("weights_target.csv"));
    write_grid_csv(out, backend.target_weights(), "weight");
  }
  {
    auto out = open_out(common.file("weights_programmed.csv"));
    write_grid_csv(out, backend.programmed_weights(), "weight");
  }
  {
    auto out = open_out(common.file("deploy_scores.csv"));
    out << "track,seed,exact_score,crossbar_score\n" << std::setprecision(10);
    for (int seed = 0; seed < opt.noise_seeds; ++seed)
      for (std::size_t k = 0; k < s.track_names.size(); ++k)
        out << s.track_names[k] << ',' << seed << ',' << s.exact[k] << ',' << s.crossbar[static_cast<std::size_t>(seed)][k]
            << '\n';
  }
  {
    auto out = open_out(common.file("action_histogram.csv"));
    out << "group,index,value,exact_count,crossbar_count\n";
    for (std::size_t k = 0; k < hist_exact.size(); ++k) {
      const bool steer = k < tables.steering.size();
      const std::size_t idx = steer ? k : k - tables.steering.size();
      out << (steer ? "steering" : "speed") << ',' << idx << ','
          << (steer ? tables.steering[idx] : tables.speed[idx]) << ',' << hist_exact[k] << ',' << hist_analog[k]
          << '\n';
    }
  }
  {
    auto out = open_out(common.file("deploy_report.txt"));
    out << std::setprecision(10) << "tracks = " << s.track_names.size() << "\nnoise_seeds = " << opt.noise_seeds
        << "\nbits = " << opt.bits << "\nmean_exact = " << s.mean_exact << "\nmean_crossbar = " << s.mean_crossbar
        << "\ngap = " << s.gap << "\nweight_correlation = " << s.weight_correlation
        << "\nactions_identical_seed0 = " << (s.actions_identical ? "true" : "false") << "\n";
  }
  svg::Plot plot;
  plot.title = "steering action histogram";
  plot.x_label = "steering (rad)";
  plot.y_label = "count";
  std::vector<double> angle, he, ha;
  for (std::size_t k = 0; k < tables.steering.size(); ++k) {
    angle.push_back(tables.steering[k]);
    he.push_back(hist_exact[k]);
    ha.push_back(hist_analog[k]);
  }
  plot.add("exact", angle, he, svg::Style::Bars);
  plot.add("crossbar", angle, ha, svg::Style::Bars);
  plot.save(common.file("deploy_actions.svg").string());
  return s;
}

// --- race ------------------------------------------------------------------------------------

race::EpisodeResult cmd_race(const Common& common, const RaceOptions& opt) {
  auto ev = make_evaluator(opt.env);
  ev.quantize_bits = opt.bits;
  if (opt.backend == "crossbar") {
    snn::CrossbarDeployment dep;
    dep.params = common.device();
    dep.seed = common.seed;
    ev.crossbar = dep;
  } else if (opt.backend != "exact") {
    throw Error(ErrorKind::InvalidArgument, "unknown backend '" + opt.backend + "' (exact|crossbar)");
  }
  const auto net = ev.prepare(snn::load_network(opt.network));
  const auto& track = ev.tracks.front();
  auto result = ev.episode_on(net, track, 0, {true, false});
  race::write_trajectory_csv(common.file("trajectory.csv").string(), result.trajectory);

  svg::Plot plot;
  plot.title = track.name + " trajectory";
  plot.x_label = "x (m)";
  plot.y_label = "y (m)";
  plot.equal_aspect = true;
  auto ring = [&](const std::vector<race::Vec2>& pts, const std::string& name) {
    std::vector<double> x, y;
    for (const auto& p : pts) x.push_back(p.x()), y.push_back(p.y());
    if (track.closed) x.push_back(pts.front().x()), y.push_back(pts.front().y());
    plot.add(name, x, y).color = "#555555";
  };
  ring(track.left, "");
  ring(track.right, "");
  std::vector<double> x, y;
  for (const auto& r : result.trajectory) x.push_back(r.x), y.push_back(r.y);
  plot.add("car", x, y);
  plot.save(common.file("trajectory.svg").string());
  return result;
}

}  // namespace rram::cli
