#include "rram/snn.hpp"

#include "rram/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

namespace rram::snn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

}  // namespace

// --- network ---------------------------------------------------------------------

void Network::validate() const {
  const auto& tables = ActionTables::standard();
  std::set<NeuronId> ids;
  std::set<std::pair<int, int>> bound;
  for (const auto& n : neurons) {
    require(ids.insert(n.id).second, "duplicate neuron id " + std::to_string(n.id));
    require(std::isfinite(n.threshold) && n.threshold >= kMinThreshold,
            "neuron " + std::to_string(n.id) + " threshold must be >= " + std::to_string(kMinThreshold));
    if (n.kind == NeuronKind::Input) require(n.channel >= kBiasChannel, "bad input channel");
    if (n.kind == NeuronKind::Output) {
      const auto size = n.group == ActionGroup::Steering ? tables.steering.size() : tables.speed.size();
      require(n.action_index >= 0 && static_cast<std::size_t>(n.action_index) < size,
              "output " + std::to_string(n.id) + " action index out of range");
      require(bound.insert({static_cast<int>(n.group), n.action_index}).second,
              "two outputs bound to the same action");
    }
  }
  std::set<std::tuple<NeuronId, NeuronId, int>> seen;
  for (const auto& s : synapses) {
    require(ids.count(s.pre) && ids.count(s.post),
            "synapse " + std::to_string(s.pre) + "->" + std::to_string(s.post) + " references a missing neuron");
    require(std::isfinite(s.weight) && std::abs(s.weight) <= 1.0, "synapse weight outside [-1, 1]");
    require(s.delay >= 1, "synapse delay must be >= 1");
    require(seen.insert({s.pre, s.post, s.delay}).second, "duplicate synapse");
  }
}

void Network::canonicalize() {
  std::sort(neurons.begin(), neurons.end(), [](const Neuron& a, const Neuron& b) { return a.id < b.id; });
  std::sort(synapses.begin(), synapses.end(), [](const Synapse& a, const Synapse& b) {
    return std::tie(a.pre, a.post, a.delay) < std::tie(b.pre, b.post, b.delay);
  });
}

const Neuron* Network::find(NeuronId id) const {
  for (const auto& n : neurons)
    if (n.id == id) return &n;
  return nullptr;
}

std::size_t Network::count(NeuronKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(neurons.begin(), neurons.end(), [kind](const Neuron& n) { return n.kind == kind; }));
}

const ActionTables& ActionTables::standard() {
  static const ActionTables tables{
      {0.0,   -0.01, 0.01,  -0.03, 0.03,  -0.05, 0.05,  -0.07, 0.07,  -0.1,
       0.1,   -0.13, 0.13,  -0.15, 0.15,  -0.17, 0.17,  -0.2,  0.2,   -0.23,
       0.23,  -0.25, 0.25,  -0.27, 0.27,  -0.3,  0.3,   -0.34, 0.34},
      {1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0}};
  return tables;
}

Network make_interface(const ActionTables& tables, double threshold) {
  Network net;
  NeuronId id = 0;
  for (int c = 0; c < kObservationChannels; ++c) net.neurons.push_back({id++, NeuronKind::Input, threshold, c});
  for (std::size_t k = 0; k < tables.steering.size(); ++k)
    net.neurons.push_back({id++, NeuronKind::Output, threshold, 0, ActionGroup::Steering, static_cast<int>(k)});
  for (std::size_t k = 0; k < tables.speed.size(); ++k)
    net.neurons.push_back({id++, NeuronKind::Output, threshold, 0, ActionGroup::Speed, static_cast<int>(k)});
  return net;
}

CompiledNetwork CompiledNetwork::compile(const Network& net, const ActionTables& tables) {
  net.validate();
  CompiledNetwork c;
  c.n_steering = tables.steering.size();
  c.n_speed = tables.speed.size();
  std::unordered_map<NeuronId, int> index;
  for (const auto& n : net.neurons) {
    index[n.id] = static_cast<int>(c.ids.size());
    c.ids.push_back(n.id);
    c.threshold.push_back(n.threshold);
    c.channel.push_back(n.kind == NeuronKind::Input ? n.channel : -2);
    const bool out = n.kind == NeuronKind::Output;
    c.steering_slot.push_back(out && n.group == ActionGroup::Steering ? n.action_index : -1);
    c.speed_slot.push_back(out && n.group == ActionGroup::Speed ? n.action_index : -1);
  }
  c.outgoing.resize(c.ids.size());
  for (const auto& s : net.synapses) {
    c.outgoing[static_cast<std::size_t>(index[s.pre])].push_back({index[s.post], s.delay, s.weight});
    c.max_delay = std::max(c.max_delay, s.delay);
  }
  return c;
}

// --- backends --------------------------------------------------------------------

void ExactBackend::deliver(const SpikeHistory& history, int t, std::span<double> potential) {
  for (int d = 1; d <= net_->max_delay && d <= t; ++d)
    for (int pre : history[static_cast<std::size_t>(t - d)])
      for (const auto& o : net_->outgoing[static_cast<std::size_t>(pre)])
        if (o.delay == d) potential[static_cast<std::size_t>(o.post)] += o.weight;
}

CrossbarBackend::CrossbarBackend(const CompiledNetwork& net, const CrossbarDeployment& dep)
    : net_(&net),
      xbar_(CrossbarConfig{}, dep.params),
      sigma_read_(dep.read_noise ? dep.params.sigma_read : 0.0),
      rng_(derive_seed(dep.seed, {0x5eadULL})) {
  const int n = net.size();
  rows_by_delay_pre_.assign(static_cast<std::size_t>(net.max_delay + 1), std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int pre = 0; pre < n; ++pre)
    for (const auto& o : net.outgoing[static_cast<std::size_t>(pre)]) {
      auto& slot = rows_by_delay_pre_[static_cast<std::size_t>(o.delay)][static_cast<std::size_t>(pre)];
      if (slot < 0) {
        slot = static_cast<int>(rows_.size());
        rows_.push_back({pre, o.delay});
      }
    }
  const int weight_rows = std::max<int>(1, static_cast<int>(rows_.size()));
  weights_ = Eigen::MatrixXd::Zero(weight_rows, std::max(1, n));
  for (int pre = 0; pre < n; ++pre)
    for (const auto& o : net.outgoing[static_cast<std::size_t>(pre)])
      weights_(rows_by_delay_pre_[static_cast<std::size_t>(o.delay)][static_cast<std::size_t>(pre)], o.post) =
          o.weight;

  CrossbarConfig cfg = dep.config;
  cfg.rows = 2 * weight_rows;
  cfg.cols = static_cast<int>(weights_.cols());
  cfg.line_r = 0.0;
  xbar_ = dep.device_variation ? Crossbar::with_variation(cfg, dep.params, derive_seed(dep.seed, {0xd2dULL}))
                               : Crossbar(cfg, dep.params);
  report_ = program_weights(xbar_, differential_targets(weights_, dep.params), dep.mode);
  y_.assign(static_cast<std::size_t>(cfg.cols), 0.0);
}

Eigen::MatrixXd CrossbarBackend::programmed_weights() const {
  return decode_weights(xbar_.conductances(), xbar_.params());
}

void CrossbarBackend::deliver(const SpikeHistory& history, int t, std::span<double> potential) {
  active_.clear();
  for (int d = 1; d <= net_->max_delay && d <= t; ++d)
    for (int pre : history[static_cast<std::size_t>(t - d)]) {
      const int row = rows_by_delay_pre_[static_cast<std::size_t>(d)][static_cast<std::size_t>(pre)];
      if (row >= 0) active_.push_back(row);
    }
  if (active_.empty()) return;
  x_active_.assign(active_.size(), 1.0);
  try {
    mvm_differential_sparse(xbar_, active_, x_active_, ReadNoise{sigma_read_, &rng_}, y_);
  } catch (const Error& e) {
    throw Error(ErrorKind::BackendFault, e.what());
  }
  for (std::size_t j = 0; j < potential.size(); ++j) potential[j] += y_[j];
}

// --- runtime --------------------------------------------------------------------

WindowRunner::WindowRunner(const CompiledNetwork& net, SynapticBackend& backend, RunOptions options)
    : net_(&net), backend_(&backend), options_(options) {
  potential_.assign(static_cast<std::size_t>(net.size()), 0.0);
  counts_.assign(static_cast<std::size_t>(net.size()), 0);
}

SpikeCounts WindowRunner::run(std::span<const SpikeTrain> trains, int T) {
  require(T >= 1, "window must have at least one step");
  for (const auto& train : trains) require(static_cast<int>(train.size()) == T, "spike train length must equal T");
  std::fill(potential_.begin(), potential_.end(), 0.0);
  std::fill(counts_.begin(), counts_.end(), 0);
  history_.resize(static_cast<std::size_t>(T));
  for (auto& h : history_) h.clear();

  const auto n = static_cast<std::size_t>(net_->size());
  for (int t = 0; t < T; ++t) {
    if (options_.leak > 0.0)
      for (auto& v : potential_) v *= 1.0 - options_.leak;
    backend_->deliver(history_, t, potential_);
    auto& fired = history_[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < n; ++i) {
      bool fire = potential_[i] >= net_->threshold[i] - kFireTolerance;
      const int ch = net_->channel[i];
      if (ch == kBiasChannel) fire = true;
      else if (ch >= 0 && static_cast<std::size_t>(ch) < trains.size() && trains[ch][static_cast<std::size_t>(t)])
        fire = true;
      if (fire) {
        potential_[i] = 0.0;
        fired.push_back(static_cast<int>(i));
        ++counts_[i];
      }
    }
  }

  SpikeCounts out;
  out.window = T;
  out.steering.assign(net_->n_steering, 0);
  out.speed.assign(net_->n_speed, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (net_->steering_slot[i] >= 0) out.steering[static_cast<std::size_t>(net_->steering_slot[i])] = counts_[i];
    if (net_->speed_slot[i] >= 0) out.speed[static_cast<std::size_t>(net_->speed_slot[i])] = counts_[i];
  }
  return out;
}

SpikeCounts run_window(const Network& net, std::span<const SpikeTrain> trains, int T) {
  const auto compiled = CompiledNetwork::compile(net);
  ExactBackend backend(compiled);
  return run_window(compiled, trains, T, backend);
}

SpikeCounts run_window(const CompiledNetwork& net, std::span<const SpikeTrain> trains, int T,
                       SynapticBackend& backend, RunOptions options) {
  WindowRunner runner(net, backend, options);
  return runner.run(trains, T);
}

// --- observation / action ----------------------------------------------------------

std::array<double, kObservationChannels> encode_observation(std::span<const double> beams) {
  if (beams.size() != static_cast<std::size_t>(kLidarBeams))
    throw Error(ErrorKind::WrongBeamCount, "expected 960 beams, got " + std::to_string(beams.size()));
  constexpr int region = kLidarBeams / kObservationChannels;
  std::array<double, kObservationChannels> out{};
  for (int r = 0; r < kObservationChannels; ++r) {
    double m = 0.0;
    for (int k = 0; k < region; ++k) {
      const double d = beams[static_cast<std::size_t>(r * region + k)];
      require(std::isfinite(d) && d >= 0.0, "beam distances must be finite and nonnegative");
      m = std::max(m, d);
    }
    out[static_cast<std::size_t>(r)] = m;
  }
  return out;
}

std::vector<SpikeTrain> to_spike_trains(std::span<const double> values, int T, double d_max) {
  require(d_max > 0.0, "d_max must be positive");
  require(T >= 1, "T must be >= 1");
  std::vector<SpikeTrain> trains(values.size(), SpikeTrain(static_cast<std::size_t>(T), 0));
  for (std::size_t c = 0; c < values.size(); ++c) {
    const double frac = std::clamp(values[c] / d_max, 0.0, 1.0);
    const long n = std::lround(T * frac);
    for (long k = 0; k < n; ++k) trains[c][static_cast<std::size_t>(k * T / n)] = 1;
  }
  return trains;
}

Action decode_action(const SpikeCounts& counts, const ActionTables& tables) {
  auto pick = [](const std::vector<int>& c) {
    int best = 0;
    for (std::size_t k = 1; k < c.size(); ++k)
      if (c[k] > c[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;  // all-zero or empty group selects index 0
  };
  Action a;
  a.steering_index = pick(counts.steering);
  a.speed_index = pick(counts.speed);
  a.steering = tables.steering.at(static_cast<std::size_t>(a.steering_index));
  a.speed = tables.speed.at(static_cast<std::size_t>(a.speed_index));
  return a;
}

// --- structure ----------------------------------------------------------------------

Network prune(const Network& net) {
  net.validate();
  std::map<NeuronId, std::vector<NeuronId>> fwd_adj, bwd_adj;
  for (const auto& s : net.synapses) {
    fwd_adj[s.pre].push_back(s.post);
    bwd_adj[s.post].push_back(s.pre);
  }
  auto reach = [](const std::vector<NeuronId>& seeds, std::map<NeuronId, std::vector<NeuronId>>& adj) {
    std::set<NeuronId> seen(seeds.begin(), seeds.end());
    std::queue<NeuronId> q;
    for (auto s : seeds) q.push(s);
    while (!q.empty()) {
      const auto a = q.front();
      q.pop();
      for (auto b : adj[a])
        if (seen.insert(b).second) q.push(b);
    }
    return seen;
  };
  std::vector<NeuronId> inputs, outputs;
  for (const auto& n : net.neurons) {
    if (n.kind == NeuronKind::Input) inputs.push_back(n.id);
    if (n.kind == NeuronKind::Output) outputs.push_back(n.id);
  }
  const auto from_inputs = reach(inputs, fwd_adj);
  const auto to_outputs = reach(outputs, bwd_adj);

  Network out;
  for (const auto& n : net.neurons)
    if (from_inputs.count(n.id) && to_outputs.count(n.id)) out.neurons.push_back(n);
  for (const auto& s : net.synapses)
    if (from_inputs.count(s.pre) && to_outputs.count(s.post)) out.synapses.push_back(s);
  out.canonicalize();
  return out;
}

Network quantized(const Network& net, int bits) {
  Network out = net;
  for (auto& s : out.synapses) s.weight = quantize(s.weight, bits);
  return out;
}

// --- serialization ------------------------------------------------------------------

namespace {

using ojson = nlohmann::ordered_json;

const char* kind_name(NeuronKind k) {
  switch (k) {
    case NeuronKind::Input: return "input";
    case NeuronKind::Hidden: return "hidden";
    case NeuronKind::Output: return "output";
  }
  return "hidden";
}

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::ParseError, where + ": " + what);
}

}  // namespace

std::string serialize(const Network& input) {
  Network net = input;
  net.canonicalize();
  ojson doc;
  doc["version"] = 1;
  ojson neurons = ojson::array();
  for (const auto& n : net.neurons) {
    ojson j;
    j["id"] = n.id;
    j["kind"] = kind_name(n.kind);
    j["threshold"] = n.threshold;
    if (n.kind == NeuronKind::Input) j["channel"] = n.channel;
    if (n.kind == NeuronKind::Output) {
      j["group"] = n.group == ActionGroup::Steering ? "steering" : "speed";
      j["index"] = n.action_index;
    }
    neurons.push_back(std::move(j));
  }
  doc["neurons"] = std::move(neurons);
  ojson synapses = ojson::array();
  for (const auto& s : net.synapses) {
    ojson j;
    j["pre"] = s.pre;
    j["post"] = s.post;
    j["weight"] = s.weight;
    j["delay"] = s.delay;
    synapses.push_back(std::move(j));
  }
  doc["synapses"] = std::move(synapses);
  return doc.dump(2) + "\n";
}

Network deserialize(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorKind::ParseError,
                "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
  if (!doc.is_object()) schema_error("document", "expected an object");
  if (!doc.contains("version")) schema_error("document", "missing mandatory 'version'");
  if (doc["version"] != 1) schema_error("version", "unsupported version " + doc["version"].dump());

  Network net;
  try {
    std::size_t k = 0;
    for (const auto& j : doc.at("neurons")) {
      const auto where = "neurons[" + std::to_string(k++) + "]";
      Neuron n;
      n.id = j.at("id").get<NeuronId>();
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "input") n.kind = NeuronKind::Input;
      else if (kind == "hidden") n.kind = NeuronKind::Hidden;
      else if (kind == "output") n.kind = NeuronKind::Output;
      else schema_error(where, "unknown kind '" + kind + "'");
      n.threshold = j.at("threshold").get<double>();
      if (n.kind == NeuronKind::Input) n.channel = j.at("channel").get<int>();
      if (n.kind == NeuronKind::Output) {
        const auto group = j.at("group").get<std::string>();
        if (group == "steering") n.group = ActionGroup::Steering;
        else if (group == "speed") n.group = ActionGroup::Speed;
        else schema_error(where, "unknown group '" + group + "'");
        n.action_index = j.at("index").get<int>();
      }
      net.neurons.push_back(n);
    }
    for (const auto& j : doc.at("synapses"))
      net.synapses.push_back({j.at("pre").get<NeuronId>(), j.at("post").get<NeuronId>(), j.at("weight").get<double>(),
                              j.at("delay").get<int>()});
  } catch (const ojson::exception& e) {
    schema_error("schema", e.what());
  }
  try {
    net.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  net.canonicalize();
  return net;
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open network file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  out << serialize(net);
}

}  // namespace rram::snn
