#include "rram/device.hpp"

#include "rram/error.hpp"
#include "rram/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

namespace rram {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Field table shared by the preset reader and writer.
const std::vector<std::pair<const char*, double DeviceParams::*>>& numeric_fields() {
  static const std::vector<std::pair<const char*, double DeviceParams::*>> fields = {
      {"g_min", &DeviceParams::g_min},
      {"g_max", &DeviceParams::g_max},
      {"v_read", &DeviceParams::v_read},
      {"v_nl", &DeviceParams::v_nl},
      {"set_threshold", &DeviceParams::set_threshold},
      {"reset_threshold", &DeviceParams::reset_threshold},
      {"a_set", &DeviceParams::a_set},
      {"a_reset", &DeviceParams::a_reset},
      {"v_slope_set", &DeviceParams::v_slope_set},
      {"v_slope_reset", &DeviceParams::v_slope_reset},
      {"width_ref", &DeviceParams::width_ref},
      {"sigma_d2d", &DeviceParams::sigma_d2d},
      {"sigma_read", &DeviceParams::sigma_read},
      {"area_ref", &DeviceParams::area_ref},
  };
  return fields;
}

}  // namespace

void DeviceParams::validate() const {
  require(g_min > 0.0 && g_min < g_max, "require 0 < g_min < g_max");
  require(v_read > 0.0, "v_read must be positive");
  require(v_nl > 0.0, "v_nl must be positive");
  require(set_threshold > 0.0 && reset_threshold > 0.0, "thresholds must be positive");
  require(a_set >= 0.0 && a_reset >= 0.0, "update magnitudes must be nonnegative");
  require(v_slope_set > 0.0 && v_slope_reset > 0.0, "voltage slopes must be positive");
  require(width_ref > 0.0, "width_ref must be positive");
  require(sigma_d2d >= 0.0 && sigma_read >= 0.0, "sigmas must be nonnegative");
  require(area_ref > 0.0, "area_ref must be positive");
}

DeviceParams preset_s4_dc() { return DeviceParams{}; }

DeviceParams preset_s4_pulse() {
  DeviceParams p;
  p.name = "S4-pulse";
  p.g_min = 0.1e-6;
  p.g_max = 0.9e-6;
  // Same normalized dynamics as S4-DC, rescaled to the 0.8 uS window.
  const double scale = (p.g_max - p.g_min) / (2.44e-6 - 1.0e-6);
  p.a_set *= scale;
  p.a_reset *= scale;
  return p;
}

DeviceParams preset_by_name(const std::string& name) {
  const auto key = lower(name);
  if (key == "s4-dc") return preset_s4_dc();
  if (key == "s4-pulse") return preset_s4_pulse();
  throw Error(ErrorKind::InvalidArgument, "unknown device preset '" + name + "'");
}

DeviceParams read_preset(std::istream& in) {
  DeviceParams p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "name") {
      p.name = value;
      continue;
    }
    const auto& fields = numeric_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](auto& f) { return key == f.first; });
    if (it == fields.end())
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      std::size_t used = 0;
      p.*(it->second) = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError,
                  "line " + std::to_string(lineno) + ": bad number for '" + key + "'");
    }
  }
  p.validate();
  return p;
}

DeviceParams load_preset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open preset file " + path);
  return read_preset(in);
}

void write_preset(std::ostream& out, const DeviceParams& p) {
  out << "# device preset\n";
  out << "name = " << p.name << "\n";
  for (const auto& [key, member] : numeric_fields()) {
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, p.*member).ptr;
    out << key << " = " << std::string_view(buf, static_cast<std::size_t>(end - buf)) << "\n";
  }
}

Eigen::ArrayXd current(const RramCell& cell, const DeviceParams& p, const Eigen::ArrayXd& v) {
  return cell.g * p.v_read * (v / p.v_nl).sinh() / std::sinh(p.v_read / p.v_nl);
}

double calibrate_v_nl(double v_low, double ratio) {
  if (!(v_low > 0.0) || !(ratio > 3.0))
    throw Error(ErrorKind::InvalidArgument, "need v_low > 0 and ratio > 3");
  // sinh(3x)/sinh(x) = 3 + 4 sinh^2(x)  =>  sinh(x) = sqrt((ratio - 3) / 4), x = v_low / v_nl
  return v_low / std::asinh(std::sqrt((ratio - 3.0) / 4.0));
}

RramCell apply_pulse(const RramCell& cell, const DeviceParams& p, double v_amp, double width) {
  if (!(width > 0.0)) throw Error(ErrorKind::InvalidArgument, "pulse width must be positive");
  const double lo = cell.g_lo(p);
  const double hi = cell.g_hi(p);
  const double span = hi - lo;
  // Update magnitudes are specified for the nominal window; scale with the cell.
  const double window_scale = cell.area_scale * cell.d2d_factor;
  const double width_factor = width / p.width_ref;

  double dg = 0.0;
  if (v_amp <= -p.set_threshold) {
    dg = p.a_set * window_scale * width_factor *
         std::exp((-v_amp - p.set_threshold) / p.v_slope_set) * (hi - cell.g) / span;
  } else if (v_amp >= p.reset_threshold) {
    dg = -p.a_reset * window_scale * width_factor *
         std::exp((v_amp - p.reset_threshold) / p.v_slope_reset) * (cell.g - lo) / span;
  }
  RramCell next = cell;
  next.g = std::clamp(cell.g + dg, lo, hi);
  return next;
}

PulseScheme PulseScheme::identical_a() {
  PulseScheme s;
  s.kind = SchemeKind::IdenticalA;
  s.set_amplitudes.assign(32, -2.5);
  s.reset_amplitudes.assign(32, 1.5);
  s.width = 500e-6;
  return s;
}

PulseScheme PulseScheme::identical_b() {
  PulseScheme s;
  s.kind = SchemeKind::IdenticalB;
  s.set_amplitudes.assign(32, -2.0);
  s.reset_amplitudes.assign(32, 1.0);
  s.width = 5e-3;
  return s;
}

PulseScheme PulseScheme::incremental_100() {
  PulseScheme s;
  s.kind = SchemeKind::Incremental100;
  s.width = 500e-6;
  for (int k = 0; k < 100; ++k) {
    s.set_amplitudes.push_back(-0.8 - 0.020 * k);
    s.reset_amplitudes.push_back(0.3 + 0.007 * k);
  }
  return s;
}

PulseScheme PulseScheme::by_name(const std::string& name) {
  const auto key = lower(name);
  if (key == "identicala") return identical_a();
  if (key == "identicalb") return identical_b();
  if (key == "incremental100") return incremental_100();
  throw Error(ErrorKind::InvalidArgument, "unknown pulse scheme '" + name + "'");
}

std::vector<TracePoint> ltp_ltd_trace(const DeviceParams& p, const PulseScheme& scheme) {
  return ltp_ltd_trace(p, scheme, pristine_cell(p));
}

std::vector<TracePoint> ltp_ltd_trace(const DeviceParams& p, const PulseScheme& scheme,
                                      const RramCell& start) {
  std::vector<TracePoint> out;
  out.reserve(scheme.set_amplitudes.size() + scheme.reset_amplitudes.size());
  RramCell cell = start;
  cell.g = cell.g_lo(p);
  int index = 0;
  auto run = [&](const std::vector<double>& amplitudes) {
    for (double v : amplitudes) {
      cell = apply_pulse(cell, p, v, scheme.width);
      out.push_back({++index, v, scheme.width, cell.g, current(cell, p, p.v_read)});
    }
  };
  run(scheme.set_amplitudes);
  run(scheme.reset_amplitudes);
  return out;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  out << "pulse_index,voltage_V,width_s,g_S,i_read_A\n";
  out << std::setprecision(10);
  for (const auto& t : trace)
    out << t.pulse_index << ',' << t.voltage << ',' << t.width << ',' << t.g << ',' << t.i_read << '\n';
}

double lognormal_factor(double sigma, double z) {
  if (sigma == 0.0) return 1.0;
  const double s2 = std::log1p(sigma * sigma);
  return std::exp(-0.5 * s2 + std::sqrt(s2) * z);
}

RramCell sample_device(const DeviceParams& p, std::uint64_t seed, double diameter) {
  if (!(diameter > 0.0)) throw Error(ErrorKind::InvalidArgument, "diameter must be positive");
  Rng rng(seed);
  RramCell cell;
  const double ratio = diameter / p.diameter_ref();
  cell.area_scale = ratio * ratio;
  cell.d2d_factor = lognormal_factor(p.sigma_d2d, normal01(rng));
  cell.g = cell.g_lo(p);
  return cell;
}

}  // namespace rram
