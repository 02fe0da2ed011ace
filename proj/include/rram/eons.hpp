#pragma once

#include "rram/race.hpp"
#include "rram/rng.hpp"
#include "rram/snn.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace rram::eons {

using snn::NeuronId;
using Innovation = std::int64_t;

struct NodeGene {
  NeuronId id = 0;
  snn::NeuronKind kind = snn::NeuronKind::Hidden;
  double threshold = 1.0;
  int channel = 0;
  snn::ActionGroup group = snn::ActionGroup::Steering;
  int action_index = 0;

  bool operator==(const NodeGene&) const = default;
};

struct EdgeGene {
  Innovation innovation = 0;
  NeuronId pre = 0;
  NeuronId post = 0;
  double weight = 0.0;
  int delay = 1;
  bool enabled = true;

  bool operator==(const EdgeGene&) const = default;
};

/// Hands out stable ids: one innovation per (pre, post, delay) connection and
/// one node id per split edge, so that crossover can align genes.
class InnovationTracker {
 public:
  explicit InnovationTracker(NeuronId first_hidden = 50) : next_node_(first_hidden) {}

  Innovation edge(NeuronId pre, NeuronId post, int delay);
  NeuronId split_node(Innovation edge);
  NeuronId fresh_node() { return next_node_++; }

 private:
  friend struct TrackerAccess;
  std::map<std::tuple<NeuronId, NeuronId, int>, Innovation> edges_;
  std::map<Innovation, NeuronId> splits_;
  Innovation next_edge_ = 0;
  NeuronId next_node_;
};

struct Genome {
  std::uint64_t id = 0;
  std::vector<NodeGene> nodes;  // sorted by id
  std::vector<EdgeGene> edges;  // sorted by innovation

  snn::Network decode() const;
  static Genome from_network(const snn::Network& net, InnovationTracker& tracker);
  std::size_t hidden_count() const;

  bool operator==(const Genome&) const = default;
};

struct MutationRates {
  double weight = 0.2;      // per edge: gaussian perturbation
  double weight_sigma = 0.1;
  double threshold = 0.1;   // per node
  double threshold_sigma = 0.1;
  double add_edge = 0.3;
  double delete_edge = 0.15;
  double add_node = 0.05;
  double delete_node = 0.03;
  double duplication = 0.02;
  double duplication_damping = 0.5;

  static MutationRates none();
};

struct EvolutionConfig {
  int population = 100;
  int generations = 200;
  int tournament_size = 4;
  double crossover_rate = 0.5;
  double mutation_rate = 0.9;
  int elitism = 1;
  std::uint64_t seed = 1;
  int init_hidden_max = 2;
  int init_edges = 40;
  MutationRates rates;

  void validate() const;
};

struct FitnessRecord {
  std::vector<double> per_track;
  double mean = 0.0;

  static FitnessRecord from_scores(std::vector<double> scores);
};

/// Fitness oracle. Must be thread-safe and deterministic in (genome, seed).
using FitnessFn = std::function<FitnessRecord(const Genome&, std::uint64_t seed)>;

std::vector<Genome> init_population(const EvolutionConfig& cfg, InnovationTracker& tracker, Rng& rng);
std::vector<Genome> init_population(const EvolutionConfig& cfg);

/// Index of the winner among k distinct uniformly drawn individuals; ties go
/// to the lower genome id.
std::size_t tournament_select(std::span<const Genome> population, std::span<const double> fitness, int k, Rng& rng);

/// `a` is the fitter parent.
Genome crossover(const Genome& a, const Genome& b, Rng& rng);
Genome mutate(const Genome& g, const MutationRates& rates, InnovationTracker& tracker, Rng& rng);

/// Episode-based fitness on a set of tracks.
struct RaceEvaluator {
  std::vector<race::Track> tracks;
  race::EpisodeConfig episode;
  race::LidarConfig lidar;
  double d_max = 0.0;  // 0 uses the lidar range
  int window = snn::kDefaultWindow;
  int quantize_bits = 0;  // 0 keeps full-precision weights
  std::optional<snn::CrossbarDeployment> crossbar;

  /// Network actually run: pruned and, if requested, quantized.
  snn::Network prepare(const snn::Network& net) const;
  FitnessRecord operator()(const Genome& g, std::uint64_t seed) const { return evaluate(g.decode(), seed); }
  FitnessRecord evaluate(const snn::Network& net, std::uint64_t seed) const;
  race::EpisodeResult episode_on(const snn::Network& net, const race::Track& track, std::uint64_t seed,
                                 race::EpisodeOptions options = {}) const;
};

struct Individual {
  Genome genome;
  FitnessRecord fitness;
  bool evaluated = false;
};

struct TraceRow {
  int generation = 0;
  double best_fitness = 0.0;  // best so far
  double mean_fitness = 0.0;
};

struct EvolutionState {
  int generation = 0;
  std::uint64_t next_genome_id = 0;
  InnovationTracker tracker;
  Rng rng;
  std::vector<Individual> population;
  Individual best;
  std::vector<TraceRow> trace;
};

struct EvolveOptions {
  int threads = 1;
  std::string checkpoint_path;  // empty disables checkpoints
  std::function<void(const TraceRow&)> on_generation;
};

EvolutionState start_evolution(const EvolutionConfig& cfg, const FitnessFn& fitness, const EvolveOptions& options = {});
void advance_generation(EvolutionState& state, const EvolutionConfig& cfg, const FitnessFn& fitness,
                        const EvolveOptions& options = {});
/// Runs (or continues) until cfg.generations have been produced.
EvolutionState evolve(const EvolutionConfig& cfg, const FitnessFn& fitness, const EvolveOptions& options = {},
                      std::optional<EvolutionState> resume_from = std::nullopt);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
void save_checkpoint(const std::string& path, const EvolutionState& state);
EvolutionState load_checkpoint(const std::string& path);

std::string genome_to_json(const Genome& g);
Genome genome_from_json(const std::string& text);

}  // namespace rram::eons
