#pragma once

#include "rram/snn.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rram::race {

using Vec2 = Eigen::Vector2d;

struct CenterPoint {
  double x = 0.0;
  double y = 0.0;
  double w_left = 1.0;
  double w_right = 1.0;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

struct Track {
  std::string name;
  bool closed = true;
  std::vector<CenterPoint> center;  // closing vertex not repeated
  std::vector<Vec2> left, right;     // boundary vertices, one per centerline vertex
  std::vector<double> arc;           // arc length at each vertex; arc.back() == length for closed tracks
  std::vector<Segment> walls;
  double length = 0.0;
  double max_half_width = 0.0;

  std::size_t segment_count() const { return closed ? center.size() : center.size() - 1; }
  Vec2 point(std::size_t i) const { return {center[i].x, center[i].y}; }
};

/// Builds boundaries and validates geometry. Throws GeometryError.
Track make_track(std::string name, std::vector<CenterPoint> points, bool closed = true, double car_radius = 0.15);
/// Reads `x_m,y_m,w_tr_left_m,w_tr_right_m` rows; `#` lines are comments.
Track load_track(const std::string& path, double car_radius = 0.15);
Track parse_track(std::istream& in, std::string name, double car_radius = 0.15);
void write_track_csv(std::ostream& out, const Track& track);

/// Open straight corridor along +x, used as a pseudo-track.
Track straight_corridor(double length, double half_width, std::size_t samples = 2);
/// Stadium track: two straights joined by half circles, counter-clockwise,
/// starting at the middle of the bottom straight.
Track oval_track(double straight, double radius, double half_width, int arc_samples = 16);
/// Circle of the given centerline radius, counter-clockwise, starting at (R, 0).
Track circle_track(double radius, double half_width, int samples = 128);
/// Mirror image about the x axis (direction of travel preserved).
Track mirrored(const Track& track);

struct LidarConfig {
  int beams = snn::kLidarBeams;
  double fov = 270.0 * 3.14159265358979323846 / 180.0;
  double max_range = 30.0;

  void validate() const;
  /// Beam angle relative to heading; index 0 is the rightmost beam.
  double beam_angle(int k) const { return (2.0 * k + 1.0 - beams) * fov / (2.0 * beams); }
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

struct EpisodeConfig {
  double dt = 0.002;
  long max_steps = 0;  // 0 picks a budget from the track length
  double laps_target = 2.0;
  double wheelbase = 0.33;
  double car_radius = 0.15;
  double max_steering = 0.34;

  void validate() const;
  double target_distance(const Track& track) const;
  long step_budget(const Track& track) const;
};

struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double steer = 0.0;
  double s = 0.0;              // arc position of the centerline projection
  double progress = 0.0;       // signed distance travelled along the centerline
  double best_progress = 0.0;  // never decreases
  std::size_t segment = 0;     // projection hint

  Pose pose() const { return {x, y, heading}; }
  double laps(const Track& track) const { return progress / track.length; }
};

/// Centerline projection: arc position and the index of the nearest segment.
struct Projection {
  double s = 0.0;
  double distance = 0.0;
  std::size_t segment = 0;
};
Projection project(const Track& track, const Vec2& p);
Projection project_near(const Track& track, const Vec2& p, std::size_t hint, std::size_t window = 12);

bool inside_corridor(const Track& track, const Vec2& p);
double wall_distance(const Track& track, const Vec2& p);

/// Distances for every beam. Throws PoseOutsideTrack.
std::vector<double> lidar_scan(const Track& track, const Pose& pose, const LidarConfig& cfg = {});
void lidar_scan(const Track& track, const Pose& pose, const LidarConfig& cfg, std::span<double> out);

CarState start_state(const Track& track);
CarState step(const Track& track, const CarState& state, double steering, double speed_cmd, const EpisodeConfig& cfg);
bool crash_check(const Track& track, const CarState& state, const EpisodeConfig& cfg);

class Controller {
 public:
  virtual ~Controller() = default;
  virtual snn::Action act(std::span<const double> beams) = 0;
};

/// Runs a network every control period through a chosen synaptic backend.
class SnnController final : public Controller {
 public:
  SnnController(const snn::Network& net, double d_max, int window = snn::kDefaultWindow);
  SnnController(const snn::Network& net, const snn::CrossbarDeployment& deployment, double d_max,
                int window = snn::kDefaultWindow);
  SnnController(const SnnController&) = delete;
  SnnController& operator=(const SnnController&) = delete;
  snn::Action act(std::span<const double> beams) override;

  const snn::CompiledNetwork& compiled() const { return net_; }
  const snn::SynapticBackend& backend() const { return *backend_; }
  const snn::SpikeCounts& last_counts() const { return counts_; }

 private:
  snn::CompiledNetwork net_;
  std::unique_ptr<snn::SynapticBackend> backend_;
  std::unique_ptr<snn::WindowRunner> runner_;
  double d_max_;
  int window_;
  snn::SpikeCounts counts_;
};

struct TrajectoryRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, heading = 0.0, speed = 0.0, steer = 0.0;
  bool alive = true;

  bool operator==(const TrajectoryRow&) const = default;
};

struct EpisodeResult {
  double score = 0.0;
  double progress = 0.0;
  long steps = 0;
  bool crashed = false;
  bool finished = false;
  std::vector<TrajectoryRow> trajectory;  // filled when requested
  std::vector<snn::Action> actions;       // filled when requested
};

struct EpisodeOptions {
  bool record_trajectory = false;
  bool record_actions = false;
};

EpisodeResult run_episode(const Track& track, Controller& controller, const EpisodeConfig& cfg = {},
                          const LidarConfig& lidar = {}, EpisodeOptions options = {});

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);
void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows);

}  // namespace rram::race
