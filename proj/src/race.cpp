#include "rram/race.hpp"

#include "rram/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace rram::race {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kSlowestSpeed = 1.0;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

[[noreturn]] void geometry(const std::string& what) { throw Error(ErrorKind::GeometryError, what); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* t_out = nullptr) {
  const Vec2 e = b - a;
  const double len2 = e.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(e) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out) *t_out = t;
  return (a + t * e - p).norm();
}

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
         p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Segment& s, const Segment& q) {
  const int o1 = orientation(s.a, s.b, q.a), o2 = orientation(s.a, s.b, q.b);
  const int o3 = orientation(q.a, q.b, s.a), o4 = orientation(q.a, q.b, s.b);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(s.a, s.b, q.a)) || (o2 == 0 && on_segment(s.a, s.b, q.b)) ||
         (o3 == 0 && on_segment(q.a, q.b, s.a)) || (o4 == 0 && on_segment(q.a, q.b, s.b));
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x())
      inside = !inside;
  }
  return inside;
}

void add_ring(std::vector<Segment>& walls, const std::vector<Vec2>& pts, bool closed) {
  const std::size_t n = pts.size();
  const std::size_t m = closed ? n : n - 1;
  for (std::size_t i = 0; i < m; ++i) walls.push_back({pts[i], pts[(i + 1) % n]});
}

void check_walls(const Track& t) {
  // walls hold the left ring followed by the right ring; neighbours inside a ring share a vertex
  const std::size_t ring = t.segment_count();
  const auto& w = t.walls;
  auto adjacent = [&](std::size_t i, std::size_t j) {
    if (i / ring != j / ring) return false;
    const std::size_t a = i % ring, b = j % ring;
    if (a + 1 == b || b + 1 == a) return true;
    return t.closed && ((a == 0 && b == ring - 1) || (b == 0 && a == ring - 1));
  };
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = i + 1; j < w.size(); ++j)
      if (!adjacent(i, j) && segments_intersect(w[i], w[j]))
        geometry("track '" + t.name + "' boundary self-intersects near centerline vertex " +
                 std::to_string(i % ring));
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

}  // namespace

// --- tracks -----------------------------------------------------------------------

Track make_track(std::string name, std::vector<CenterPoint> points, bool closed, double car_radius) {
  Track t;
  t.name = std::move(name);
  t.closed = closed;
  t.center = std::move(points);
  const std::size_t n = t.center.size();
  if (n < (closed ? 3u : 2u)) geometry("track needs at least " + std::to_string(closed ? 3 : 2) + " points");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = t.center[i];
    if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.w_left) || !std::isfinite(c.w_right))
      geometry("non-finite value at centerline vertex " + std::to_string(i));
    if (c.w_left <= car_radius || c.w_right <= car_radius)
      geometry("width at centerline vertex " + std::to_string(i) + " does not exceed the car radius");
    t.max_half_width = std::max({t.max_half_width, c.w_left, c.w_right});
  }

  const std::size_t segs = t.segment_count();
  std::vector<Vec2> normal(segs);
  t.arc.assign(1, 0.0);
  for (std::size_t i = 0; i < segs; ++i) {
    const Vec2 e = t.point((i + 1) % n) - t.point(i);
    const double len = e.norm();
    if (len <= 1e-12) geometry("zero-length centerline segment at vertex " + std::to_string(i));
    normal[i] = Vec2(-e.y(), e.x()) / len;
    t.arc.push_back(t.arc.back() + len);
  }
  t.length = t.arc.back();

  t.left.resize(n);
  t.right.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 miter;
    double scale = 1.0;
    const bool has_prev = closed || i > 0;
    const bool has_next = closed || i + 1 < n;
    if (has_prev && has_next) {
      const Vec2& a = normal[(i + segs - 1) % segs];
      const Vec2& b = normal[i % segs];
      const Vec2 sum = a + b;
      if (sum.norm() < 1e-9) geometry("centerline reverses direction at vertex " + std::to_string(i));
      miter = sum.normalized();
      scale = 1.0 / miter.dot(b);
    } else {
      miter = has_next ? normal[i] : normal[segs - 1];
    }
    t.left[i] = t.point(i) + t.center[i].w_left * scale * miter;
    t.right[i] = t.point(i) - t.center[i].w_right * scale * miter;
  }
  add_ring(t.walls, t.left, closed);
  add_ring(t.walls, t.right, closed);
  check_walls(t);
  return t;
}

Track parse_track(std::istream& in, std::string name, double car_radius) {
  static const std::array<std::string, 4> kColumns{"x_m", "y_m", "w_tr_left_m", "w_tr_right_m"};
  std::array<int, 4> col{0, 1, 2, 3};
  std::size_t width = 4;
  bool header_seen = false;
  std::vector<CenterPoint> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = trim(line);
    if (body.empty()) continue;
    const bool comment = body[0] == '#';
    if (comment) body = trim(body.substr(1));
    if (!header_seen && pts.empty() && body.find("x_m") != std::string::npos) {
      const auto names = split_csv(body);
      for (std::size_t k = 0; k < kColumns.size(); ++k) {
        const auto it = std::find(names.begin(), names.end(), kColumns[k]);
        if (it == names.end())
          throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": missing column " + kColumns[k]);
        col[k] = static_cast<int>(it - names.begin());
      }
      width = names.size();
      header_seen = true;
      continue;
    }
    if (comment) continue;
    const auto fields = split_csv(body);
    if (fields.size() != width)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                             " fields, got " + std::to_string(fields.size()));
    std::array<double, 4> v{};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& f = fields[static_cast<std::size_t>(col[k])];
      std::size_t used = 0;
      try {
        v[k] = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != f.size())
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad number '" + f + "'");
    }
    pts.push_back({v[0], v[1], v[2], v[3]});
  }
  if (pts.size() < 3) throw Error(ErrorKind::ParseError, "track file has fewer than 3 centerline rows");

  const Vec2 first(pts.front().x, pts.front().y);
  const Vec2 last(pts.back().x, pts.back().y);
  if ((first - last).norm() <= 1e-9) {
    pts.pop_back();
  } else {
    double longest = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      longest = std::max(longest, std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y));
    if ((first - last).norm() > 1.5 * longest)
      geometry("centerline does not close: gap " + std::to_string((first - last).norm()) + " m");
  }
  return make_track(std::move(name), std::move(pts), true, car_radius);
}

Track load_track(const std::string& path, double car_radius) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open track file " + path);
  auto name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (const auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
  return parse_track(in, name, car_radius);
}

void write_track_csv(std::ostream& out, const Track& track) {
  out << "x_m,y_m,w_tr_left_m,w_tr_right_m\n" << std::setprecision(17);
  for (const auto& c : track.center) out << c.x << ',' << c.y << ',' << c.w_left << ',' << c.w_right << '\n';
}

Track straight_corridor(double length, double half_width, std::size_t samples) {
  if (!(length > 0.0) || samples < 2) geometry("corridor needs positive length and two samples");
  std::vector<CenterPoint> pts;
  for (std::size_t i = 0; i < samples; ++i)
    pts.push_back({length * static_cast<double>(i) / static_cast<double>(samples - 1), 0.0, half_width, half_width});
  return make_track("corridor", std::move(pts), false);
}

Track oval_track(double straight, double radius, double half_width, int arc_samples) {
  if (!(straight > 0.0) || !(radius > half_width) || arc_samples < 2) geometry("bad oval dimensions");
  std::vector<CenterPoint> pts;
  const int straight_segments = std::max(2, static_cast<int>(std::ceil(straight)));
  const double h = straight / 2.0;
  auto add = [&](double x, double y) { pts.push_back({x, y, half_width, half_width}); };
  for (int i = 0; i < straight_segments / 2; ++i) add(h * 2.0 * i / straight_segments, -radius);
  for (int i = 0; i < arc_samples; ++i) {
    const double a = -kPi / 2 + kPi * i / arc_samples;
    add(h + radius * std::cos(a), radius * std::sin(a));
  }
  for (int i = 0; i < straight_segments; ++i) add(h - straight * i / straight_segments, radius);
  for (int i = 0; i < arc_samples; ++i) {
    const double a = kPi / 2 + kPi * i / arc_samples;
    add(-h + radius * std::cos(a), radius * std::sin(a));
  }
  for (int i = 0; i < straight_segments - straight_segments / 2; ++i)
    add(-h + straight * i / straight_segments, -radius);
  return make_track("oval", std::move(pts), true);
}

Track circle_track(double radius, double half_width, int samples) {
  if (!(radius > half_width) || samples < 8) geometry("bad circle dimensions");
  std::vector<CenterPoint> pts;
  for (int i = 0; i < samples; ++i) {
    const double a = kTwoPi * i / samples;
    pts.push_back({radius * std::cos(a), radius * std::sin(a), half_width, half_width});
  }
  return make_track("circle", std::move(pts), true);
}

Track mirrored(const Track& track) {
  auto flip = [](Vec2 v) { return Vec2(v.x(), -v.y()); };
  Track m = track;
  m.name = track.name + "_mirrored";
  for (auto& c : m.center) {
    c.y = -c.y;
    std::swap(c.w_left, c.w_right);
  }
  m.left.clear();
  m.right.clear();
  for (const auto& p : track.right) m.left.push_back(flip(p));
  for (const auto& p : track.left) m.right.push_back(flip(p));
  m.walls.clear();
  add_ring(m.walls, m.left, m.closed);
  add_ring(m.walls, m.right, m.closed);
  return m;
}

// --- geometry queries ------------------------------------------------------------

Projection project(const Track& track, const Vec2& p) {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  const std::size_t n = track.center.size();
  for (std::size_t i = 0; i < track.segment_count(); ++i) {
    double t = 0.0;
    const double d = point_segment_distance(p, track.point(i), track.point((i + 1) % n), &t);
    if (d < best.distance) best = {track.arc[i] + t * (track.arc[i + 1] - track.arc[i]), d, i};
  }
  return best;
}

Projection project_near(const Track& track, const Vec2& p, std::size_t hint, std::size_t window) {
  const std::size_t segs = track.segment_count();
  if (2 * window + 1 >= segs) return project(track, p);
  const std::size_t n = track.center.size();
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= 2 * window; ++k) {
    std::size_t i;
    if (track.closed) {
      i = (hint + segs + k - window) % segs;
    } else {
      const long j = static_cast<long>(hint) + static_cast<long>(k) - static_cast<long>(window);
      if (j < 0 || j >= static_cast<long>(segs)) continue;
      i = static_cast<std::size_t>(j);
    }
    double t = 0.0;
    const double d = point_segment_distance(p, track.point(i), track.point((i + 1) % n), &t);
    if (d < best.distance) best = {track.arc[i] + t * (track.arc[i + 1] - track.arc[i]), d, i};
  }
  if (best.distance > 2.0 * track.max_half_width) return project(track, p);
  return best;
}

bool inside_corridor(const Track& track, const Vec2& p) {
  if (track.closed) return point_in_polygon(track.left, p) != point_in_polygon(track.right, p);
  std::vector<Vec2> poly(track.left);
  poly.insert(poly.end(), track.right.rbegin(), track.right.rend());
  return point_in_polygon(poly, p);
}

double wall_distance(const Track& track, const Vec2& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& w : track.walls) d = std::min(d, point_segment_distance(p, w.a, w.b));
  return d;
}

// --- lidar -----------------------------------------------------------------------

void LidarConfig::validate() const {
  if (beams < 1) throw Error(ErrorKind::InvalidArgument, "lidar needs at least one beam");
  if (!(fov > 0.0) || fov > kTwoPi) throw Error(ErrorKind::InvalidArgument, "lidar fov must be in (0, 360] degrees");
  if (!(max_range > 0.0)) throw Error(ErrorKind::InvalidArgument, "lidar max range must be positive");
}

std::vector<double> lidar_scan(const Track& track, const Pose& pose, const LidarConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(cfg.beams));
  lidar_scan(track, pose, cfg, out);
  return out;
}

void lidar_scan(const Track& track, const Pose& pose, const LidarConfig& cfg, std::span<double> out) {
  cfg.validate();
  if (out.size() != static_cast<std::size_t>(cfg.beams))
    throw Error(ErrorKind::WrongBeamCount, "output span does not match beam count");
  const Vec2 c(pose.x, pose.y);
  if (!inside_corridor(track, c)) throw Error(ErrorKind::PoseOutsideTrack, "lidar pose is outside the corridor");

  const int n = cfg.beams;
  const double ch = std::cos(pose.heading), sh = std::sin(pose.heading);
  // unit directions relative to the heading, cached per configuration
  thread_local std::vector<Vec2> unit;
  thread_local LidarConfig cached{0, 0.0, 0.0};
  if (cached.beams != cfg.beams || cached.fov != cfg.fov) {
    unit.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double a = cfg.beam_angle(k);
      unit[static_cast<std::size_t>(k)] = Vec2(std::cos(a), std::sin(a));
    }
    cached = cfg;
  }
  std::fill(out.begin(), out.end(), cfg.max_range);
  const double inv = 2.0 * n / cfg.fov;
  const double half = cfg.fov / 2.0;

  auto cast = [&](int k, const Vec2& a, const Vec2& e) {
    const Vec2& u = unit[static_cast<std::size_t>(k)];
    const Vec2 d(ch * u.x() - sh * u.y(), sh * u.x() + ch * u.y());
    const double denom = cross(d, e);
    if (denom == 0.0) return;
    const double t = cross(a, e) / denom;
    const double s = cross(a, d) / denom;
    if (t >= 0.0 && s >= 0.0 && s <= 1.0 && t < out[static_cast<std::size_t>(k)]) out[static_cast<std::size_t>(k)] = t;
  };

  for (const auto& w : track.walls) {
    const Vec2 a = w.a - c;
    const Vec2 b = w.b - c;
    const Vec2 e = b - a;
    if (point_segment_distance(Vec2::Zero(), a, b) > cfg.max_range) continue;
    const double pa = std::atan2(a.y(), a.x());
    const double pb = std::atan2(b.y(), b.x());
    const double span = std::remainder(pb - pa, kTwoPi);
    if (std::abs(span) > kPi - 1e-6) {
      for (int k = 0; k < n; ++k) cast(k, a, e);
      continue;
    }
    const double lo = std::remainder((span >= 0.0 ? pa : pb) - pose.heading, kTwoPi);
    const double width = std::abs(span);
    for (const double shift : {0.0, -kTwoPi}) {
      const double start = lo + shift;
      const double end = start + width;
      if (end < -half - 1e-9 || start > half + 1e-9) continue;
      const int kmin = std::max(0, static_cast<int>(std::ceil((start * inv + n - 1) / 2.0)) - 1);
      const int kmax = std::min(n - 1, static_cast<int>(std::floor((end * inv + n - 1) / 2.0)) + 1);
      for (int k = kmin; k <= kmax; ++k) cast(k, a, e);
    }
  }
}

// --- car ---------------------------------------------------------------------------

void EpisodeConfig::validate() const {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  if (!(laps_target > 0.0)) throw Error(ErrorKind::InvalidArgument, "laps target must be positive");
  if (!(wheelbase > 0.0) || !(car_radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "bad car geometry");
  if (max_steps < 0) throw Error(ErrorKind::InvalidArgument, "max steps must be >= 0");
}

double EpisodeConfig::target_distance(const Track& track) const {
  return track.closed ? laps_target * track.length : track.length;
}

long EpisodeConfig::step_budget(const Track& track) const {
  if (max_steps > 0) return max_steps;
  return static_cast<long>(std::ceil(1.5 * target_distance(track) / (kSlowestSpeed * dt)));
}

CarState start_state(const Track& track) {
  CarState s;
  s.x = track.center[0].x;
  s.y = track.center[0].y;
  const Vec2 e = track.point(1) - track.point(0);
  s.heading = std::atan2(e.y(), e.x());
  return s;
}

CarState step(const Track& track, const CarState& state, double steering, double speed_cmd,
              const EpisodeConfig& cfg) {
  if (!std::isfinite(steering) || !std::isfinite(speed_cmd) || speed_cmd < 0.0)
    throw Error(ErrorKind::InvalidArgument, "steering and speed must be finite, speed nonnegative");
  if (std::abs(steering) > cfg.max_steering + 1e-12)
    throw Error(ErrorKind::InvalidArgument, "steering outside the action table bounds");
  CarState next = state;
  const double v = speed_cmd;
  next.speed = v;
  next.steer = steering;
  next.x = state.x + v * std::cos(state.heading) * cfg.dt;
  next.y = state.y + v * std::sin(state.heading) * cfg.dt;
  next.heading = std::remainder(state.heading + v / cfg.wheelbase * std::tan(steering) * cfg.dt, kTwoPi);

  const auto proj = project_near(track, Vec2(next.x, next.y), state.segment);
  double ds = proj.s - state.s;
  if (track.closed) ds = std::remainder(ds, track.length);
  next.s = proj.s;
  next.segment = proj.segment;
  next.progress = state.progress + ds;
  next.best_progress = std::max(state.best_progress, next.progress);
  return next;
}

bool crash_check(const Track& track, const CarState& state, const EpisodeConfig& cfg) {
  const Vec2 p(state.x, state.y);
  return inside_corridor(track, p) && wall_distance(track, p) >= cfg.car_radius;
}

// --- controllers and episodes ----------------------------------------------------------

SnnController::SnnController(const snn::Network& net, double d_max, int window)
    : net_(snn::CompiledNetwork::compile(net)), d_max_(d_max), window_(window) {
  backend_ = std::make_unique<snn::ExactBackend>(net_);
  runner_ = std::make_unique<snn::WindowRunner>(net_, *backend_);
}

SnnController::SnnController(const snn::Network& net, const snn::CrossbarDeployment& deployment, double d_max,
                             int window)
    : net_(snn::CompiledNetwork::compile(net)), d_max_(d_max), window_(window) {
  backend_ = std::make_unique<snn::CrossbarBackend>(net_, deployment);
  runner_ = std::make_unique<snn::WindowRunner>(net_, *backend_);
}

snn::Action SnnController::act(std::span<const double> beams) {
  const auto obs = snn::encode_observation(beams);
  const auto trains = snn::to_spike_trains(obs, window_, d_max_);
  counts_ = runner_->run(trains, window_);
  return snn::decode_action(counts_);
}

EpisodeResult run_episode(const Track& track, Controller& controller, const EpisodeConfig& cfg,
                          const LidarConfig& lidar, EpisodeOptions options) {
  cfg.validate();
  lidar.validate();
  EpisodeResult result;
  CarState state = start_state(track);
  const double target = cfg.target_distance(track);
  const long budget = cfg.step_budget(track);
  std::vector<double> beams(static_cast<std::size_t>(lidar.beams));
  auto record = [&](long k, bool alive) {
    if (options.record_trajectory)
      result.trajectory.push_back(
          {static_cast<double>(k) * cfg.dt, state.x, state.y, state.heading, state.speed, state.steer, alive});
  };
  bool alive = crash_check(track, state, cfg);
  record(0, alive);
  result.crashed = !alive;
  for (long k = 1; alive && k <= budget; ++k) {
    lidar_scan(track, state.pose(), lidar, beams);
    const auto action = controller.act(beams);
    if (options.record_actions) result.actions.push_back(action);
    state = step(track, state, action.steering, action.speed, cfg);
    result.steps = k;
    result.finished = state.best_progress >= target;
    alive = result.finished || crash_check(track, state, cfg);
    result.crashed = !alive;
    record(k, alive);
    if (result.finished) break;
  }
  result.progress = state.best_progress;
  result.score = std::clamp(state.best_progress / target, 0.0, 1.0);
  return result;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  out << "t_s,x_m,y_m,heading_rad,speed_mps,steer_rad,alive\n" << std::setprecision(12);
  for (const auto& r : rows)
    out << r.t << ',' << r.x << ',' << r.y << ',' << r.heading << ',' << r.speed << ',' << r.steer << ','
        << (r.alive ? 1 : 0) << '\n';
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  write_trajectory_csv(out, rows);
}

}  // namespace rram::race
