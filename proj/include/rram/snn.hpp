#pragma once

#include "rram/crossbar.hpp"
#include "rram/rng.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rram::snn {

using NeuronId = std::int64_t;

enum class NeuronKind { Input, Hidden, Output };
enum class ActionGroup { Steering, Speed };

/// Input channel that spikes on every step.
inline constexpr int kBiasChannel = -1;
inline constexpr int kObservationChannels = 10;
inline constexpr int kLidarBeams = 960;
inline constexpr int kDefaultWindow = 50;
/// Potentials within this distance below threshold still fire. Absorbs the
/// rounding difference between exact and analog accumulation.
inline constexpr double kFireTolerance = 1e-9;
inline constexpr double kMinThreshold = 1e-6;

struct Neuron {
  NeuronId id = 0;
  NeuronKind kind = NeuronKind::Hidden;
  double threshold = 1.0;
  int channel = 0;                            // inputs only
  ActionGroup group = ActionGroup::Steering;  // outputs only
  int action_index = 0;                       // outputs only

  bool operator==(const Neuron&) const = default;
};

struct Synapse {
  NeuronId pre = 0;
  NeuronId post = 0;
  double weight = 0.0;
  int delay = 1;

  bool operator==(const Synapse&) const = default;
};

struct Network {
  std::vector<Neuron> neurons;
  std::vector<Synapse> synapses;

  /// Throws InvalidArgument on the first violated invariant.
  void validate() const;
  /// Sorts neurons by id and synapses by (pre, post, delay).
  void canonicalize();
  const Neuron* find(NeuronId id) const;
  std::size_t count(NeuronKind kind) const;

  bool operator==(const Network&) const = default;
};

struct ActionTables {
  std::vector<double> steering;
  std::vector<double> speed;

  /// The 29 steering angles (rad) and 11 speeds (m/s) the outputs select from.
  static const ActionTables& standard();
};

/// Ten LIDAR inputs plus one output neuron per action value; no synapses.
Network make_interface(const ActionTables& tables = ActionTables::standard(), double threshold = 1.0);

using SpikeTrain = std::vector<std::uint8_t>;

struct SpikeCounts {
  std::vector<int> steering;
  std::vector<int> speed;
  int window = 0;

  bool operator==(const SpikeCounts&) const = default;
};

struct Action {
  double steering = 0.0;
  double speed = 1.0;
  int steering_index = 0;
  int speed_index = 0;
};

/// Dense, index-based form of a Network used by the runtime.
struct CompiledNetwork {
  struct Out {
    int post;
    int delay;
    double weight;
  };
  std::vector<NeuronId> ids;
  std::vector<double> threshold;
  std::vector<int> channel;  // -2 for non-inputs
  std::vector<int> steering_slot, speed_slot;  // -1 when not bound
  std::vector<std::vector<Out>> outgoing;
  int max_delay = 1;
  std::size_t n_steering = 0, n_speed = 0;

  static CompiledNetwork compile(const Network& net, const ActionTables& tables = ActionTables::standard());
  int size() const { return static_cast<int>(ids.size()); }
};

/// fired[t] lists the neuron indices that spiked at step t of the window.
using SpikeHistory = std::vector<std::vector<int>>;

class SynapticBackend {
 public:
  virtual ~SynapticBackend() = default;
  /// Adds the charge arriving at step t to `potential`.
  virtual void deliver(const SpikeHistory& history, int t, std::span<double> potential) = 0;
};

class ExactBackend final : public SynapticBackend {
 public:
  explicit ExactBackend(const CompiledNetwork& net) : net_(&net) {}
  void deliver(const SpikeHistory& history, int t, std::span<double> potential) override;

 private:
  const CompiledNetwork* net_;
};

struct CrossbarDeployment {
  CrossbarConfig config;           // rows/cols are overwritten to fit the network
  DeviceParams params;
  ProgramMode mode = ClosedLoop{};
  bool device_variation = true;    // sample d2d window factors
  bool read_noise = true;          // per-read noise at params.sigma_read
  std::uint64_t seed = 0;
};

/// Accumulates charge through a simulated differential crossbar: one weight
/// row per (pre, delay) pair present in the network, one column per neuron.
class CrossbarBackend final : public SynapticBackend {
 public:
  CrossbarBackend(const CompiledNetwork& net, const CrossbarDeployment& deployment);
  void deliver(const SpikeHistory& history, int t, std::span<double> potential) override;

  const Crossbar& crossbar() const { return xbar_; }
  const ProgramReport& program_report() const { return report_; }
  /// Target weights (weight rows x neurons) as mapped onto the array.
  const Eigen::MatrixXd& target_weights() const { return weights_; }
  Eigen::MatrixXd programmed_weights() const;

 private:
  struct RowKey {
    int pre;
    int delay;
  };
  const CompiledNetwork* net_;
  std::vector<RowKey> rows_;
  std::vector<std::vector<int>> rows_by_delay_pre_;  // [delay][pre] -> row or -1
  Eigen::MatrixXd weights_;
  Crossbar xbar_;
  ProgramReport report_;
  double sigma_read_ = 0.0;
  Rng rng_;
  std::vector<int> active_;
  std::vector<double> x_active_;
  std::vector<double> y_;
};

struct RunOptions {
  double leak = 0.0;  // fraction of potential lost per step
};

/// Reusable simulator holding per-window scratch buffers.
class WindowRunner {
 public:
  WindowRunner(const CompiledNetwork& net, SynapticBackend& backend, RunOptions options = {});

  /// Runs T steps from cleared potentials. trains[c] drives inputs on channel c;
  /// channels without a train are silent.
  SpikeCounts run(std::span<const SpikeTrain> trains, int T = kDefaultWindow);

 private:
  const CompiledNetwork* net_;
  SynapticBackend* backend_;
  RunOptions options_;
  std::vector<double> potential_;
  SpikeHistory history_;
  std::vector<int> counts_;
};

SpikeCounts run_window(const Network& net, std::span<const SpikeTrain> trains, int T = kDefaultWindow);
SpikeCounts run_window(const CompiledNetwork& net, std::span<const SpikeTrain> trains, int T,
                       SynapticBackend& backend, RunOptions options = {});

/// Maximum distance in each of ten equal regions of the 960-beam scan.
std::array<double, kObservationChannels> encode_observation(std::span<const double> beams);

/// Deterministic rate code: round(T * clamp(v / d_max)) evenly spaced spikes.
std::vector<SpikeTrain> to_spike_trains(std::span<const double> values, int T, double d_max);

Action decode_action(const SpikeCounts& counts, const ActionTables& tables = ActionTables::standard());

/// Keeps only neurons and synapses on some directed input-to-output path.
Network prune(const Network& net);

/// Copy with every weight snapped to the signed quantization grid.
Network quantized(const Network& net, int bits = 4);

/// Canonical JSON text (version 1).
std::string serialize(const Network& net);
/// Throws ParseError carrying line and column.
Network deserialize(const std::string& text);
Network load_network(const std::string& path);
void save_network(const std::string& path, const Network& net);

}  // namespace rram::snn
