#include "oracles.hpp"
#include "rram/eons.hpp"
#include "rram/error.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace rram;
using namespace rram::eons;

namespace {

EvolutionConfig small_config(std::uint64_t seed = 3) {
  EvolutionConfig cfg;
  cfg.population = 16;
  cfg.generations = 5;
  cfg.seed = seed;
  cfg.init_edges = 12;
  return cfg;
}

// A cheap landscape: reward the sum of enabled weights, plus a
// seed-dependent jitter so that evaluation order would show up if streams leaked.
FitnessRecord weight_sum(const Genome& g, std::uint64_t seed) {
  double s = 0;
  for (const auto& e : g.edges)
    if (e.enabled) s += e.weight;
  Rng rng(seed);
  return FitnessRecord::from_scores({s, s + 0.01 * uniform01(rng)});
}

std::set<Innovation> edge_ids(const Genome& g) {
  std::set<Innovation> out;
  for (const auto& e : g.edges) out.insert(e.innovation);
  return out;
}

std::set<NeuronId> node_ids(const Genome& g) {
  std::set<NeuronId> out;
  for (const auto& n : g.nodes) out.insert(n.id);
  return out;
}

bool has_interface(const Genome& g) {
  const auto ids = node_ids(g);
  for (const auto& n : snn::make_interface().neurons)
    if (!ids.count(n.id)) return false;
  return true;
}

}  // namespace

TEST_CASE("initial population") {
  const auto cfg = small_config();
  const auto a = init_population(cfg);
  const auto b = init_population(cfg);
  CHECK(a == b);
  REQUIRE(a.size() == 16);
  auto other = cfg;
  other.seed = 4;
  CHECK(init_population(other) != a);
  for (const auto& g : a) {
    CHECK_NOTHROW(g.decode());
    CHECK(has_interface(g));
    CHECK(g.hidden_count() <= static_cast<std::size_t>(cfg.init_hidden_max));
    for (const auto& n : g.nodes) {
      CHECK(n.threshold > 0.0);
      CHECK(n.threshold <= 1.0);
    }
    for (const auto& e : g.edges) {
      CHECK(std::abs(e.weight) <= 1.0);
      CHECK(e.delay >= 1);
      CHECK(e.delay <= 4);
    }
    CHECK(edge_ids(g).size() == g.edges.size());
  }
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.tournament_size = 17;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.crossover_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.rates.duplication = -0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.tournament_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("innovation tracker hands out stable ids") {
  InnovationTracker t;
  const auto e0 = t.edge(0, 10, 1);
  const auto e1 = t.edge(0, 10, 2);
  CHECK(e0 != e1);
  CHECK(t.edge(0, 10, 1) == e0);
  const auto n = t.split_node(e0);
  CHECK(n == 50);
  CHECK(t.split_node(e0) == n);
  CHECK(t.fresh_node() == 51);
}

TEST_CASE("tournament selection") {
  const auto pop = init_population(small_config());
  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < fit.size(); ++i) fit[i] = std::sin(static_cast<double>(i) * 1.7);
  const auto best = static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
  Rng rng(1);

  SUBCASE("k equal to the population picks the global best") {
    for (int r = 0; r < 50; ++r) CHECK(tournament_select(pop, fit, static_cast<int>(pop.size()), rng) == best);
  }
  SUBCASE("ties go to the lower genome id") {
    std::vector<double> flat(pop.size(), 0.5);
    CHECK(tournament_select(pop, flat, static_cast<int>(pop.size()), rng) == 0);
  }
  SUBCASE("win rate of the best matches the combinatorial probability") {
    const int n = static_cast<int>(pop.size()), k = 4, draws = 10000;
    int wins = 0;
    for (int r = 0; r < draws; ++r) wins += tournament_select(pop, fit, k, rng) == best;
    const double p = 1.0 - oracle::binomial(n - 1, k) / oracle::binomial(n, k);
    CHECK(p == doctest::Approx(0.25));
    const double sigma = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(wins / double(draws) - p) < 3 * sigma);
  }
  SUBCASE("k = 1 is uniform") {
    std::vector<int> hits(pop.size());
    const int draws = 16000;
    for (int r = 0; r < draws; ++r) ++hits[tournament_select(pop, fit, 1, rng)];
    const double p = 1.0 / static_cast<double>(pop.size());
    const double sigma = std::sqrt(p * (1 - p) / draws);
    for (int h : hits) CHECK(std::abs(h / double(draws) - p) < 4 * sigma);
  }
  SUBCASE("bad k") {
    CHECK_THROWS_AS(tournament_select(pop, fit, 0, rng), Error);
    CHECK_THROWS_AS(tournament_select(pop, fit, 17, rng), Error);
  }
}

TEST_CASE("crossover") {
  auto cfg = small_config();
  cfg.population = 30;
  InnovationTracker tracker;
  Rng rng(9);
  auto pop = init_population(cfg, tracker, rng);
  // diversify structure a little so that node and edge sets differ
  for (auto& g : pop)
    for (int m = 0; m < 5; ++m) g = mutate(g, cfg.rates, tracker, rng);

  CHECK(crossover(pop[0], pop[0], rng) == pop[0]);

  for (int trial = 0; trial < 1000; ++trial) {
    const auto& a = pop[rng() % pop.size()];
    const auto& b = pop[rng() % pop.size()];
    const auto child = crossover(a, b, rng);
    REQUIRE_NOTHROW(child.decode());
    REQUIRE(has_interface(child));
    const auto ea = edge_ids(a), eb = edge_ids(b);
    for (const auto& e : child.edges) {
      REQUIRE((ea.count(e.innovation) || eb.count(e.innovation)));
      // a matching gene comes whole from one parent
      const auto from_a = std::find(a.edges.begin(), a.edges.end(), e) != a.edges.end();
      const auto from_b = std::find(b.edges.begin(), b.edges.end(), e) != b.edges.end();
      REQUIRE((from_a || from_b));
    }
    // disjoint and excess genes follow the fitter parent
    CHECK(edge_ids(child) == ea);
    CHECK(node_ids(child) == node_ids(a));
  }
}

TEST_CASE("mutation") {
  auto cfg = small_config();
  InnovationTracker tracker;
  Rng rng(21);
  auto pop = init_population(cfg, tracker, rng);

  SUBCASE("all rates zero is the identity") {
    for (const auto& g : pop) CHECK(mutate(g, MutationRates::none(), tracker, rng) == g);
  }

  SUBCASE("weights stay bounded and every result decodes") {
    MutationRates heavy;
    heavy.weight = 1.0;
    heavy.weight_sigma = 0.8;
    heavy.threshold = 1.0;
    heavy.threshold_sigma = 0.8;
    auto g = pop[0];
    for (int k = 0; k < 10000; ++k) {
      g = mutate(g, heavy, tracker, rng);
      for (const auto& e : g.edges) REQUIRE(std::abs(e.weight) <= 1.0);
      for (const auto& n : g.nodes) REQUIRE(n.threshold > 0.0);
      if (k % 250 == 0) REQUIRE_NOTHROW(g.decode());
    }
    CHECK_NOTHROW(g.decode());
  }

  SUBCASE("node count moves only through the structural node operators") {
    struct Case {
      MutationRates rates;
      int lo, hi;
    };
    auto only = [](double MutationRates::*field) {
      auto r = MutationRates::none();
      r.*field = 1.0;
      return r;
    };
    MutationRates edges_only = MutationRates::none();
    edges_only.weight = edges_only.threshold = edges_only.add_edge = edges_only.delete_edge = 1.0;
    const std::vector<Case> cases{{edges_only, 0, 0},
                                  {only(&MutationRates::add_node), 0, 1},
                                  {only(&MutationRates::delete_node), -1, 0},
                                  {only(&MutationRates::duplication), 0, 1}};
    for (const auto& c : cases) {
      auto g = pop[1];
      for (int k = 0; k < 300; ++k) {
        const auto next = mutate(g, c.rates, tracker, rng);
        const auto delta = static_cast<int>(next.nodes.size()) - static_cast<int>(g.nodes.size());
        REQUIRE(delta >= c.lo);
        REQUIRE(delta <= c.hi);
        REQUIRE(has_interface(next));
        REQUIRE_NOTHROW(next.decode());
        g = next;
        if (g.hidden_count() > 20 || g.edges.empty()) g = pop[1];
      }
    }
  }

  SUBCASE("splitting an edge disables it and bridges through a new node") {
    auto r = MutationRates::none();
    r.add_node = 1.0;
    const auto& g = pop[2];
    REQUIRE_FALSE(g.edges.empty());
    const auto child = mutate(g, r, tracker, rng);
    CHECK(child.nodes.size() == g.nodes.size() + 1);
    const auto disabled = std::count_if(child.edges.begin(), child.edges.end(), [](const EdgeGene& e) { return !e.enabled; });
    CHECK(disabled == 1);
  }

  SUBCASE("duplication copies incident edges at damped weights") {
    auto r = MutationRates::none();
    r.add_node = 1.0;
    auto g = mutate(pop[3], r, tracker, rng);
    REQUIRE(g.hidden_count() >= 1);
    auto d = MutationRates::none();
    d.duplication = 1.0;
    const auto child = mutate(g, d, tracker, rng);
    REQUIRE(child.nodes.size() == g.nodes.size() + 1);
    const auto old_ids = node_ids(g);
    NeuronId copy = 0;
    for (const auto& n : child.nodes)
      if (!old_ids.count(n.id)) copy = n.id;
    for (const auto& e : child.edges) {
      if (e.pre != copy && e.post != copy) continue;
      bool found = false;
      for (const auto& o : g.edges)
        if (o.enabled && o.delay == e.delay && std::abs(o.weight * d.duplication_damping - e.weight) < 1e-15 &&
            (o.pre == e.pre || e.pre == copy) && (o.post == e.post || e.post == copy))
          found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("evolution") {
  auto cfg = small_config();

  SUBCASE("zero generations returns the best of the initial population") {
    cfg.generations = 0;
    const auto s = evolve(cfg, weight_sum);
    REQUIRE(s.trace.size() == 1);
    double best = -1e9;
    for (const auto& g : init_population(cfg)) best = std::max(best, weight_sum(g, 0).per_track[0]);
    CHECK(s.best.fitness.per_track[0] == doctest::Approx(best).epsilon(1e-12));
    CHECK(s.best.genome.id < 16);
  }

  SUBCASE("best so far never falls and runs are reproducible across thread counts") {
    cfg.generations = 12;
    const auto one = evolve(cfg, weight_sum);
    EvolveOptions opts;
    opts.threads = 4;
    const auto four = evolve(cfg, weight_sum, opts);
    REQUIRE(one.trace.size() == 13);
    for (std::size_t k = 1; k < one.trace.size(); ++k)
      CHECK(one.trace[k].best_fitness >= one.trace[k - 1].best_fitness);
    for (std::size_t k = 0; k < one.trace.size(); ++k) {
      CHECK(one.trace[k].best_fitness == four.trace[k].best_fitness);
      CHECK(one.trace[k].mean_fitness == four.trace[k].mean_fitness);
    }
    CHECK(one.best.genome == four.best.genome);
  }

  SUBCASE("selection raises the mean on a weight-sum landscape") {
    cfg.population = 30;
    cfg.generations = 20;
    for (std::uint64_t seed : {1, 2, 3}) {
      cfg.seed = seed;
      const auto s = evolve(cfg, weight_sum);
      CHECK(s.trace.back().mean_fitness > s.trace.front().mean_fitness + 1.0);
    }
  }

  SUBCASE("resuming from a checkpoint continues the same run") {
    const auto dir = std::filesystem::temp_directory_path() / "rram_eons_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "state.json").string();
    cfg.generations = 6;
    const auto straight = evolve(cfg, weight_sum);
    auto half = cfg;
    half.generations = 3;
    EvolveOptions opts;
    opts.checkpoint_path = path;
    evolve(half, weight_sum, opts);
    auto restored = load_checkpoint(path);
    CHECK(restored.generation == 3);
    const auto resumed = evolve(cfg, weight_sum, {}, std::move(restored));
    REQUIRE(resumed.trace.size() == straight.trace.size());
    for (std::size_t k = 0; k < straight.trace.size(); ++k) {
      CHECK(resumed.trace[k].best_fitness == straight.trace[k].best_fitness);
      CHECK(resumed.trace[k].mean_fitness == straight.trace[k].mean_fitness);
    }
    CHECK(resumed.best.genome == straight.best.genome);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.json").string()), Error);
    std::filesystem::remove_all(dir);
  }

  SUBCASE("trace csv") {
    cfg.generations = 2;
    const auto s = evolve(cfg, weight_sum);
    const auto path = (std::filesystem::temp_directory_path() / "rram_trace.csv").string();
    write_trace_csv(path, s.trace);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "generation,best_fitness,mean_fitness");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
  }
}

TEST_CASE("genome json round trip") {
  const auto pop = init_population(small_config());
  for (const auto& g : pop) CHECK(genome_from_json(genome_to_json(g)) == g);
  CHECK_THROWS_AS(genome_from_json("{\"id\": 1"), Error);
}

TEST_CASE("race fitness") {
  RaceEvaluator ev;
  ev.episode.dt = 0.02;
  InnovationTracker tracker;

  SUBCASE("the bare interface drives straight and finishes a corridor") {
    ev.tracks = {race::straight_corridor(15.0, 1.0), race::straight_corridor(15.0, 1.0)};
    const auto g = Genome::from_network(snn::make_interface(), tracker);
    const auto f = ev(g, 1);
    REQUIRE(f.per_track.size() == 2);
    CHECK(f.per_track[0] == 1.0);
    CHECK(f.per_track[1] == f.per_track[0]);
    CHECK(f.mean == 1.0);
  }

  SUBCASE("a bias held on the hardest left turn goes nowhere") {
    ev.tracks = {race::straight_corridor(40.0, 0.4)};
    auto net = snn::make_interface();
    net.neurons.push_back({10000, snn::NeuronKind::Input, 1.0, snn::kBiasChannel});
    NeuronId hard_left = 0;
    for (const auto& n : net.neurons)
      if (n.kind == snn::NeuronKind::Output && n.group == snn::ActionGroup::Steering && n.action_index == 28)
        hard_left = n.id;
    net.synapses.push_back({10000, hard_left, 1.0, 1});
    const auto f = ev.evaluate(net, 1);
    CHECK(f.mean < 0.05);
  }

  SUBCASE("evaluation needs a track") {
    CHECK_THROWS_AS(ev.evaluate(snn::make_interface(), 1), Error);
  }

  SUBCASE("quantized preparation keeps the structure") {
    ev.quantize_bits = 4;
    auto net = snn::make_interface();
    net.synapses.push_back({0, 10, 0.3, 1});
    const auto p = ev.prepare(net);
    REQUIRE(p.synapses.size() == 1);
    CHECK(std::abs(p.synapses[0].weight - 0.3) <= 1.0 / 15 + 1e-12);
  }
}
