#include "rram/eons.hpp"

#include "rram/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <mutex>
#include <sstream>
#include <thread>

namespace rram::eons {

using snn::ActionGroup;
using snn::NeuronKind;
using json = nlohmann::ordered_json;

struct TrackerAccess {
  static json to_json(const InnovationTracker& t) {
    json edges = json::array();
    for (const auto& [key, inn] : t.edges_)
      edges.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), inn});
    json splits = json::array();
    for (const auto& [edge, node] : t.splits_) splits.push_back({edge, node});
    return {{"next_edge", t.next_edge_}, {"next_node", t.next_node_}, {"edges", edges}, {"splits", splits}};
  }
  static InnovationTracker from_json(const json& j) {
    InnovationTracker t(j.at("next_node").get<NeuronId>());
    t.next_edge_ = j.at("next_edge").get<Innovation>();
    for (const auto& e : j.at("edges"))
      t.edges_[{e[0].get<NeuronId>(), e[1].get<NeuronId>(), e[2].get<int>()}] = e[3].get<Innovation>();
    for (const auto& s : j.at("splits")) t.splits_[s[0].get<Innovation>()] = s[1].get<NeuronId>();
    return t;
  }
};

Innovation InnovationTracker::edge(NeuronId pre, NeuronId post, int delay) {
  const auto [it, inserted] = edges_.try_emplace({pre, post, delay}, next_edge_);
  if (inserted) ++next_edge_;
  return it->second;
}

NeuronId InnovationTracker::split_node(Innovation edge) {
  const auto [it, inserted] = splits_.try_emplace(edge, next_node_);
  if (inserted) ++next_node_;
  return it->second;
}

// --- genome ---------------------------------------------------------------------------

namespace {

void sort_genes(Genome& g) {
  std::sort(g.nodes.begin(), g.nodes.end(), [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
  std::sort(g.edges.begin(), g.edges.end(),
            [](const EdgeGene& a, const EdgeGene& b) { return a.innovation < b.innovation; });
}

bool has_node(const Genome& g, NeuronId id) {
  return std::binary_search(g.nodes.begin(), g.nodes.end(), NodeGene{id},
                            [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
}

bool has_edge(const Genome& g, Innovation inn) {
  return std::any_of(g.edges.begin(), g.edges.end(), [inn](const EdgeGene& e) { return e.innovation == inn; });
}

double random_threshold(Rng& rng) { return std::max(0.01, 1.0 - uniform01(rng)); }
double random_weight(Rng& rng) { return std::uniform_real_distribution<double>(-1.0, 1.0)(rng); }
int random_delay(Rng& rng) { return std::uniform_int_distribution<int>(1, 4)(rng); }

template <class T>
std::size_t pick(const std::vector<T>& v, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
}

bool valid_pre(const NodeGene& n) { return n.kind != NeuronKind::Output; }
bool valid_post(const NodeGene& n) { return n.kind != NeuronKind::Input; }

bool try_add_edge(Genome& g, InnovationTracker& tracker, NeuronId pre, NeuronId post, double weight, int delay) {
  const Innovation inn = tracker.edge(pre, post, delay);
  if (has_edge(g, inn)) return false;
  g.edges.push_back({inn, pre, post, std::clamp(weight, -1.0, 1.0), delay, true});
  return true;
}

bool add_random_edge(Genome& g, InnovationTracker& tracker, Rng& rng) {
  std::vector<NeuronId> pres, posts;
  for (const auto& n : g.nodes) {
    if (valid_pre(n)) pres.push_back(n.id);
    if (valid_post(n)) posts.push_back(n.id);
  }
  if (pres.empty() || posts.empty()) return false;
  for (int attempt = 0; attempt < 16; ++attempt) {
    const NeuronId pre = pres[pick(pres, rng)];
    const NeuronId post = posts[pick(posts, rng)];
    const double w = random_weight(rng);
    const int d = random_delay(rng);
    if (pre != post && try_add_edge(g, tracker, pre, post, w, d)) return true;
  }
  return false;
}

}  // namespace

snn::Network Genome::decode() const {
  snn::Network net;
  for (const auto& n : nodes) net.neurons.push_back({n.id, n.kind, n.threshold, n.channel, n.group, n.action_index});
  for (const auto& e : edges)
    if (e.enabled) net.synapses.push_back({e.pre, e.post, e.weight, e.delay});
  net.canonicalize();
  net.validate();
  return net;
}

Genome Genome::from_network(const snn::Network& net, InnovationTracker& tracker) {
  net.validate();
  Genome g;
  for (const auto& n : net.neurons) g.nodes.push_back({n.id, n.kind, n.threshold, n.channel, n.group, n.action_index});
  for (const auto& s : net.synapses)
    g.edges.push_back({tracker.edge(s.pre, s.post, s.delay), s.pre, s.post, s.weight, s.delay, true});
  sort_genes(g);
  return g;
}

std::size_t Genome::hidden_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const NodeGene& n) { return n.kind == NeuronKind::Hidden; }));
}

MutationRates MutationRates::none() {
  MutationRates r;
  r.weight = r.threshold = r.add_edge = r.delete_edge = r.add_node = r.delete_node = r.duplication = 0.0;
  return r;
}

void EvolutionConfig::validate() const {
  auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (tournament_size < 1 || population < tournament_size)
    throw Error(ErrorKind::InvalidArgument, "need population >= tournament_size >= 1");
  if (generations < 0 || elitism < 0 || elitism > population)
    throw Error(ErrorKind::InvalidArgument, "bad generations or elitism");
  if (!rate(crossover_rate) || !rate(mutation_rate) || !rate(rates.weight) || !rate(rates.threshold) ||
      !rate(rates.add_edge) || !rate(rates.delete_edge) || !rate(rates.add_node) || !rate(rates.delete_node) ||
      !rate(rates.duplication))
    throw Error(ErrorKind::InvalidArgument, "rates must lie in [0, 1]");
  if (init_hidden_max < 0 || init_edges < 0) throw Error(ErrorKind::InvalidArgument, "bad initial structure");
}

FitnessRecord FitnessRecord::from_scores(std::vector<double> scores) {
  FitnessRecord r;
  r.per_track = std::move(scores);
  double sum = 0.0;
  for (double s : r.per_track) sum += s;
  r.mean = r.per_track.empty() ? 0.0 : sum / static_cast<double>(r.per_track.size());
  return r;
}

// --- operators --------------------------------------------------------------------------

std::vector<Genome> init_population(const EvolutionConfig& cfg, InnovationTracker& tracker, Rng& rng) {
  cfg.validate();
  const auto interface = snn::make_interface();
  std::vector<Genome> pop;
  for (int i = 0; i < cfg.population; ++i) {
    Genome g;
    g.id = static_cast<std::uint64_t>(i);
    for (const auto& n : interface.neurons)
      g.nodes.push_back({n.id, n.kind, random_threshold(rng), n.channel, n.group, n.action_index});
    const int hidden = std::uniform_int_distribution<int>(0, cfg.init_hidden_max)(rng);
    for (int h = 0; h < hidden; ++h) g.nodes.push_back({tracker.fresh_node(), NeuronKind::Hidden, random_threshold(rng)});
    sort_genes(g);
    for (int e = 0; e < cfg.init_edges; ++e) add_random_edge(g, tracker, rng);
    sort_genes(g);
    pop.push_back(std::move(g));
  }
  return pop;
}

std::vector<Genome> init_population(const EvolutionConfig& cfg) {
  InnovationTracker tracker;
  Rng rng = make_rng(cfg.seed, {0x1a17});
  return init_population(cfg, tracker, rng);
}

std::size_t tournament_select(std::span<const Genome> population, std::span<const double> fitness, int k, Rng& rng) {
  const std::size_t n = population.size();
  if (k < 1 || static_cast<std::size_t>(k) > n || fitness.size() != n)
    throw Error(ErrorKind::InvalidArgument, "tournament size must be in [1, population]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::size_t best = n;
  for (int j = 0; j < k; ++j) {
    const auto r = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(j), n - 1)(rng);
    std::swap(idx[static_cast<std::size_t>(j)], idx[r]);
    const std::size_t c = idx[static_cast<std::size_t>(j)];
    if (best == n || fitness[c] > fitness[best] ||
        (fitness[c] == fitness[best] && population[c].id < population[best].id))
      best = c;
  }
  return best;
}

Genome crossover(const Genome& a, const Genome& b, Rng& rng) {
  Genome child;
  child.id = a.id;
  auto bn = b.nodes.begin();
  for (const auto& n : a.nodes) {
    while (bn != b.nodes.end() && bn->id < n.id) ++bn;
    const bool match = bn != b.nodes.end() && bn->id == n.id;
    child.nodes.push_back(match && uniform01(rng) < 0.5 ? *bn : n);
  }
  auto be = b.edges.begin();
  for (const auto& e : a.edges) {
    while (be != b.edges.end() && be->innovation < e.innovation) ++be;
    const bool match = be != b.edges.end() && be->innovation == e.innovation;
    child.edges.push_back(match && uniform01(rng) < 0.5 ? *be : e);
  }
  return child;
}

Genome mutate(const Genome& parent, const MutationRates& r, InnovationTracker& tracker, Rng& rng) {
  Genome g = parent;
  auto chance = [&](double p) { return p > 0.0 && uniform01(rng) < p; };

  for (auto& e : g.edges)
    if (chance(r.weight)) e.weight = std::clamp(e.weight + r.weight_sigma * normal01(rng), -1.0, 1.0);
  for (auto& n : g.nodes)
    if (chance(r.threshold)) n.threshold = std::clamp(n.threshold + r.threshold_sigma * normal01(rng), 0.01, 1.0);

  if (chance(r.add_edge)) add_random_edge(g, tracker, rng);
  if (chance(r.delete_edge) && !g.edges.empty()) g.edges.erase(g.edges.begin() + static_cast<long>(pick(g.edges, rng)));

  if (chance(r.add_node)) {
    std::vector<std::size_t> enabled;
    for (std::size_t i = 0; i < g.edges.size(); ++i)
      if (g.edges[i].enabled) enabled.push_back(i);
    if (!enabled.empty()) {
      EdgeGene& split = g.edges[enabled[pick(enabled, rng)]];
      NeuronId node = tracker.split_node(split.innovation);
      if (has_node(g, node)) node = tracker.fresh_node();
      split.enabled = false;
      const EdgeGene old = split;
      g.nodes.push_back({node, NeuronKind::Hidden, random_threshold(rng)});
      sort_genes(g);
      try_add_edge(g, tracker, old.pre, node, 1.0, 1);
      try_add_edge(g, tracker, node, old.post, old.weight, old.delay);
    }
  }

  auto hidden_ids = [&] {
    std::vector<NeuronId> ids;
    for (const auto& n : g.nodes)
      if (n.kind == NeuronKind::Hidden) ids.push_back(n.id);
    return ids;
  };

  if (chance(r.delete_node)) {
    const auto ids = hidden_ids();
    if (!ids.empty()) {
      const NeuronId victim = ids[pick(ids, rng)];
      std::erase_if(g.nodes, [victim](const NodeGene& n) { return n.id == victim; });
      std::erase_if(g.edges, [victim](const EdgeGene& e) { return e.pre == victim || e.post == victim; });
    }
  }

  if (chance(r.duplication)) {
    const auto ids = hidden_ids();
    if (!ids.empty()) {
      const NeuronId src = ids[pick(ids, rng)];
      const NeuronId copy = tracker.fresh_node();
      const auto it = std::find_if(g.nodes.begin(), g.nodes.end(), [src](const NodeGene& n) { return n.id == src; });
      NodeGene dup = *it;
      dup.id = copy;
      g.nodes.push_back(dup);
      const auto edges = g.edges;
      for (const auto& e : edges) {
        if (!e.enabled || (e.pre != src && e.post != src)) continue;
        const NeuronId pre = e.pre == src ? copy : e.pre;
        const NeuronId post = e.post == src ? copy : e.post;
        try_add_edge(g, tracker, pre, post, e.weight * r.duplication_damping, e.delay);
      }
    }
  }

  sort_genes(g);
  return g;
}

// --- race fitness ------------------------------------------------------------------------

snn::Network RaceEvaluator::prepare(const snn::Network& net) const {
  auto out = snn::prune(net);
  if (quantize_bits > 0) out = snn::quantized(out, quantize_bits);
  return out;
}

race::EpisodeResult RaceEvaluator::episode_on(const snn::Network& net, const race::Track& track, std::uint64_t seed,
                                              race::EpisodeOptions options) const {
  const double range = d_max > 0.0 ? d_max : lidar.max_range;
  if (crossbar) {
    auto dep = *crossbar;
    dep.seed = derive_seed(crossbar->seed, {seed});
    race::SnnController controller(net, dep, range, window);
    return race::run_episode(track, controller, episode, lidar, options);
  }
  race::SnnController controller(net, range, window);
  return race::run_episode(track, controller, episode, lidar, options);
}

FitnessRecord RaceEvaluator::evaluate(const snn::Network& net, std::uint64_t seed) const {
  if (tracks.empty()) throw Error(ErrorKind::InvalidArgument, "evaluation needs at least one track");
  const auto prepared = prepare(net);
  std::vector<double> scores;
  for (const auto& t : tracks) scores.push_back(episode_on(prepared, t, seed).score);
  return FitnessRecord::from_scores(std::move(scores));
}

// --- generational loop ---------------------------------------------------------------------

namespace {

void evaluate_pending(std::vector<Individual>& pop, const FitnessFn& fitness, std::uint64_t seed, int generation,
                      int threads) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (!pop[i].evaluated) todo.push_back(i);
  auto work = [&](std::size_t i) {
    pop[i].fitness = fitness(pop[i].genome, derive_seed(seed, {static_cast<std::uint64_t>(generation), i}));
    pop[i].evaluated = true;
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(todo.size())));
  if (workers == 1) {
    for (auto i : todo) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next.fetch_add(1)) < todo.size();) {
        try {
          work(todo[k]);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::size_t> ranking(const std::vector<Individual>& pop) {
  std::vector<std::size_t> order(pop.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pop[a].fitness.mean != pop[b].fitness.mean) return pop[a].fitness.mean > pop[b].fitness.mean;
    return pop[a].genome.id < pop[b].genome.id;
  });
  return order;
}

void record(EvolutionState& s, const EvolveOptions& options) {
  const auto order = ranking(s.population);
  const auto& top = s.population[order.front()];
  if (!s.best.evaluated || top.fitness.mean > s.best.fitness.mean) s.best = top;
  double sum = 0.0;
  for (const auto& ind : s.population) sum += ind.fitness.mean;
  TraceRow row{s.generation, s.best.fitness.mean, sum / static_cast<double>(s.population.size())};
  s.trace.push_back(row);
  if (options.on_generation) options.on_generation(row);
  if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, s);
}

}  // namespace

EvolutionState start_evolution(const EvolutionConfig& cfg, const FitnessFn& fitness, const EvolveOptions& options) {
  cfg.validate();
  EvolutionState s;
  s.rng = make_rng(cfg.seed, {0x1a17});
  for (auto& g : init_population(cfg, s.tracker, s.rng)) s.population.push_back({std::move(g), {}, false});
  s.next_genome_id = static_cast<std::uint64_t>(cfg.population);
  evaluate_pending(s.population, fitness, cfg.seed, 0, options.threads);
  record(s, options);
  return s;
}

void advance_generation(EvolutionState& s, const EvolutionConfig& cfg, const FitnessFn& fitness,
                        const EvolveOptions& options) {
  const auto order = ranking(s.population);
  std::vector<Genome> genomes;
  std::vector<double> fit;
  for (const auto& ind : s.population) {
    genomes.push_back(ind.genome);
    fit.push_back(ind.fitness.mean);
  }
  std::vector<Individual> next;
  for (int e = 0; e < cfg.elitism; ++e) next.push_back(s.population[order[static_cast<std::size_t>(e)]]);
  while (static_cast<int>(next.size()) < cfg.population) {
    const std::size_t p1 = tournament_select(genomes, fit, cfg.tournament_size, s.rng);
    Genome child;
    if (uniform01(s.rng) < cfg.crossover_rate) {
      const std::size_t p2 = tournament_select(genomes, fit, cfg.tournament_size, s.rng);
      const bool first_fitter = fit[p1] > fit[p2] || (fit[p1] == fit[p2] && genomes[p1].id <= genomes[p2].id);
      child = first_fitter ? crossover(genomes[p1], genomes[p2], s.rng) : crossover(genomes[p2], genomes[p1], s.rng);
    } else {
      child = genomes[p1];
    }
    if (uniform01(s.rng) < cfg.mutation_rate) child = mutate(child, cfg.rates, s.tracker, s.rng);
    child.id = s.next_genome_id++;
    next.push_back({std::move(child), {}, false});
  }
  s.population = std::move(next);
  ++s.generation;
  evaluate_pending(s.population, fitness, cfg.seed, s.generation, options.threads);
  record(s, options);
}

EvolutionState evolve(const EvolutionConfig& cfg, const FitnessFn& fitness, const EvolveOptions& options,
                      std::optional<EvolutionState> resume_from) {
  cfg.validate();
  EvolutionState s = resume_from ? std::move(*resume_from) : start_evolution(cfg, fitness, options);
  while (s.generation < cfg.generations) advance_generation(s, cfg, fitness, options);
  return s;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out << "generation,best_fitness,mean_fitness\n" << std::setprecision(10);
  for (const auto& r : trace) out << r.generation << ',' << r.best_fitness << ',' << r.mean_fitness << '\n';
}

// --- persistence ---------------------------------------------------------------------------

namespace {

json genome_json(const Genome& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes)
    nodes.push_back({n.id, static_cast<int>(n.kind), n.threshold, n.channel, static_cast<int>(n.group), n.action_index});
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.innovation, e.pre, e.post, e.weight, e.delay, e.enabled});
  return {{"id", g.id}, {"nodes", nodes}, {"edges", edges}};
}

Genome genome_parse(const json& j) {
  Genome g;
  g.id = j.at("id").get<std::uint64_t>();
  for (const auto& n : j.at("nodes"))
    g.nodes.push_back({n[0].get<NeuronId>(), static_cast<NeuronKind>(n[1].get<int>()), n[2].get<double>(),
                       n[3].get<int>(), static_cast<ActionGroup>(n[4].get<int>()), n[5].get<int>()});
  for (const auto& e : j.at("edges"))
    g.edges.push_back({e[0].get<Innovation>(), e[1].get<NeuronId>(), e[2].get<NeuronId>(), e[3].get<double>(),
                       e[4].get<int>(), e[5].get<bool>()});
  return g;
}

json individual_json(const Individual& ind) {
  return {{"genome", genome_json(ind.genome)},
          {"evaluated", ind.evaluated},
          {"per_track", ind.fitness.per_track},
          {"mean", ind.fitness.mean}};
}

Individual individual_parse(const json& j) {
  Individual ind;
  ind.genome = genome_parse(j.at("genome"));
  ind.evaluated = j.at("evaluated").get<bool>();
  ind.fitness.per_track = j.at("per_track").get<std::vector<double>>();
  ind.fitness.mean = j.at("mean").get<double>();
  return ind;
}

}  // namespace

std::string genome_to_json(const Genome& g) { return genome_json(g).dump(); }

Genome genome_from_json(const std::string& text) {
  try {
    return genome_parse(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("genome: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const EvolutionState& s) {
  std::ostringstream rng_state;
  rng_state << s.rng;
  json pop = json::array();
  for (const auto& ind : s.population) pop.push_back(individual_json(ind));
  json trace = json::array();
  for (const auto& r : s.trace) trace.push_back({r.generation, r.best_fitness, r.mean_fitness});
  const json doc{{"version", 1},
                 {"generation", s.generation},
                 {"next_genome_id", s.next_genome_id},
                 {"rng", rng_state.str()},
                 {"tracker", TrackerAccess::to_json(s.tracker)},
                 {"best", individual_json(s.best)},
                 {"population", pop},
                 {"trace", trace}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + tmp);
    out << std::setprecision(17) << doc.dump() << '\n';
  }
  std::rename(tmp.c_str(), path.c_str());
}

EvolutionState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open checkpoint " + path);
  try {
    const json doc = json::parse(in);
    if (doc.at("version") != 1) throw Error(ErrorKind::ParseError, "unsupported checkpoint version");
    EvolutionState s;
    s.generation = doc.at("generation").get<int>();
    s.next_genome_id = doc.at("next_genome_id").get<std::uint64_t>();
    std::istringstream rng_state(doc.at("rng").get<std::string>());
    rng_state >> s.rng;
    s.tracker = TrackerAccess::from_json(doc.at("tracker"));
    s.best = individual_parse(doc.at("best"));
    for (const auto& p : doc.at("population")) s.population.push_back(individual_parse(p));
    for (const auto& r : doc.at("trace")) s.trace.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>()});
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace rram::eons
