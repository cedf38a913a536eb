#include "ocl/gwr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ocl/errors.hpp"
#include "ocl/linalg.hpp"

namespace ocl {

GammaGwrConfig GammaGwrConfig::with_depth(std::size_t k) {
  GammaGwrConfig c;
  c.context_depth = k;
  c.alpha.resize(k + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    c.alpha[i] = 0.7 * std::pow(0.5, static_cast<double>(i));
    sum += c.alpha[i];
  }
  for (auto& a : c.alpha) a /= sum;
  return c;
}

void GammaGwrConfig::validate() const {
  if (alpha.size() != context_depth + 1) throw ConfigError("Gamma-GWR: alpha must have K+1 entries");
  for (double a : alpha) {
    if (!(a > 0.0)) throw ConfigError("Gamma-GWR: alpha components must be positive");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("Gamma-GWR: beta must lie in [0,1]");
  if (!(eps_n < eps_b) || !(eps_n >= 0.0) || !(eps_b <= 1.0)) {
    throw ConfigError("Gamma-GWR: learning rates require 0 <= eps_n < eps_b <= 1");
  }
  if (!(activity_threshold >= 0.0 && activity_threshold < 1.0)) {
    throw ConfigError("Gamma-GWR: activity threshold must lie in [0,1)");
  }
  if (!(habituation_threshold > 0.0 && habituation_threshold < 1.0)) {
    throw ConfigError("Gamma-GWR: habituation threshold must lie in (0,1)");
  }
  if (!(tau_b > 0.0 && tau_b <= 1.0) || !(tau_n > 0.0 && tau_n < tau_b)) {
    throw ConfigError("Gamma-GWR: habituation rates require 0 < tau_n < tau_b <= 1");
  }
  if (!(kappa > 0.0)) throw ConfigError("Gamma-GWR: kappa must be positive");
  if (max_edge_age < 0) throw ConfigError("Gamma-GWR: max_edge_age must be >= 0");
  if (max_neurons < 2) throw ConfigError("Gamma-GWR: max_neurons must be >= 2");
}

double activity(double distance) { return std::exp(-distance); }

std::optional<int> majority_label(const std::map<int, double>& hist) {
  std::optional<int> best;
  double best_count = 0.0;
  for (const auto& [label, count] : hist) {
    if (count > best_count) {
      best_count = count;
      best = label;
    }
  }
  return best;
}

GammaGwr::GammaGwr(GammaGwrConfig config, std::size_t dim) : config_(std::move(config)), dim_(dim) {
  config_.validate();
  if (dim_ < 1) throw ArgumentError("Gamma-GWR: input dim must be >= 1");
  context_ = fresh_context();
}

const Neuron& GammaGwr::neuron(NeuronId id) const {
  const auto it = neurons_.find(id);
  if (it == neurons_.end()) throw StateError("Gamma-GWR: no neuron with id " + std::to_string(id));
  return it->second;
}

Neuron& GammaGwr::mutable_neuron(NeuronId id) {
  const auto it = neurons_.find(id);
  if (it == neurons_.end()) throw StateError("Gamma-GWR: no neuron with id " + std::to_string(id));
  return it->second;
}

NeuronId GammaGwr::add_neuron(Vector w, std::vector<Vector> contexts) {
  if (w.size() != dim_) throw ArgumentError("add_neuron: weight dim mismatch");
  if (contexts.empty()) contexts.assign(config_.context_depth, Vector(dim_, 0.0));
  if (contexts.size() != config_.context_depth) throw ArgumentError("add_neuron: expected K context vectors");
  for (const auto& c : contexts) {
    if (c.size() != dim_) throw ArgumentError("add_neuron: context dim mismatch");
  }
  if (neurons_.size() >= config_.max_neurons) throw StateError("add_neuron: max_neurons reached");
  Neuron n;
  n.id = next_id_++;
  n.w = std::move(w);
  n.contexts = std::move(contexts);
  const NeuronId id = n.id;
  neurons_.emplace(id, std::move(n));
  return id;
}

std::vector<NeuronId> GammaGwr::neighbors(NeuronId id) const {
  std::vector<NeuronId> out;
  const auto it = adjacency_.find(id);
  if (it == adjacency_.end()) return out;
  for (const auto& [other, age] : it->second) out.push_back(other);
  return out;
}

std::optional<int> GammaGwr::edge_age(NeuronId a, NeuronId b) const {
  const auto it = adjacency_.find(a);
  if (it == adjacency_.end()) return std::nullopt;
  const auto jt = it->second.find(b);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

std::size_t GammaGwr::edge_count() const {
  std::size_t n = 0;
  for (const auto& [id, adj] : adjacency_) n += adj.size();
  return n / 2;
}

std::vector<GammaGwr::Edge> GammaGwr::edges() const {
  std::vector<Edge> out;
  for (const auto& [a, adj] : adjacency_) {
    for (const auto& [b, age] : adj) {
      if (a < b) out.push_back({a, b, age});
    }
  }
  return out;
}

void GammaGwr::set_edge(NeuronId a, NeuronId b, int age) {
  if (a == b) return;
  adjacency_[a][b] = age;
  adjacency_[b][a] = age;
}

void GammaGwr::remove_edge(NeuronId a, NeuronId b) {
  if (auto it = adjacency_.find(a); it != adjacency_.end()) {
    it->second.erase(b);
    if (it->second.empty()) adjacency_.erase(it);
  }
  if (auto it = adjacency_.find(b); it != adjacency_.end()) {
    it->second.erase(a);
    if (it->second.empty()) adjacency_.erase(it);
  }
}

ContextState GammaGwr::fresh_context() const {
  ContextState s;
  s.global.assign(config_.context_depth, Vector(dim_, 0.0));
  return s;
}

void GammaGwr::reset_context() { context_ = fresh_context(); }

double GammaGwr::distance(const Neuron& n, std::span<const double> x, const std::vector<Vector>& global) const {
  double d = config_.alpha[0] * euclidean(x, n.w);
  for (std::size_t k = 0; k < config_.context_depth; ++k) {
    d += config_.alpha[k + 1] * euclidean(global[k], n.contexts[k]);
  }
  return d;
}

double GammaGwr::distance(NeuronId j, std::span<const double> x) const {
  if (x.size() != dim_) throw ArgumentError("distance: input dim mismatch");
  return distance(neuron(j), x, context_.global);
}

BmuResult GammaGwr::find_bmu(std::span<const double> x, const std::vector<Vector>& global) const {
  if (neurons_.empty()) throw StateError("find_bmu: network has no neurons");
  if (x.size() != dim_) throw ArgumentError("find_bmu: input dim mismatch");
  BmuResult r;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (const auto& [id, n] : neurons_) {
    const double d = distance(n, x, global);
    if (!have_best || d < best) {
      if (have_best) {
        second = best;
        r.second = r.best;
      }
      best = d;
      r.best = id;
      have_best = true;
    } else if (!r.second || d < second) {
      second = d;
      r.second = id;
    }
  }
  r.distance = best;
  return r;
}

BmuResult GammaGwr::find_bmu(std::span<const double> x) const { return find_bmu(x, context_.global); }

void GammaGwr::advance_context(ContextState& state, double beta) {
  if (!state.has_prev) return;
  for (std::size_t k = 0; k < state.global.size(); ++k) {
    const Vector& lower = k == 0 ? state.prev_w : state.prev_contexts[k - 1];
    for (std::size_t i = 0; i < state.global[k].size(); ++i) {
      state.global[k][i] = beta * state.prev_w[i] + (1.0 - beta) * lower[i];
    }
  }
}

void GammaGwr::update_global_context() { advance_context(context_, config_.beta); }

void GammaGwr::snapshot_prev(NeuronId id) {
  const Neuron& n = neuron(id);
  context_.has_prev = true;
  context_.prev_w = n.w;
  context_.prev_contexts = n.contexts;
}

void GammaGwr::adapt(NeuronId b, std::span<const double> x) {
  if (x.size() != dim_) throw ArgumentError("adapt: input dim mismatch");
  auto move = [&](Neuron& n, double eps) {
    const double rate = eps * n.h;
    for (std::size_t i = 0; i < dim_; ++i) n.w[i] += rate * (x[i] - n.w[i]);
    for (std::size_t k = 0; k < config_.context_depth; ++k) {
      for (std::size_t i = 0; i < dim_; ++i) n.contexts[k][i] += rate * (context_.global[k][i] - n.contexts[k][i]);
    }
  };
  move(mutable_neuron(b), config_.eps_b);
  for (NeuronId n : neighbors(b)) move(mutable_neuron(n), config_.eps_n);
}

void GammaGwr::habituate(NeuronId i, bool is_bmu) {
  Neuron& n = mutable_neuron(i);
  const double tau = is_bmu ? config_.tau_b : config_.tau_n;
  n.h = std::clamp(n.h + tau * (config_.kappa * (1.0 - n.h) - 1.0), 0.0, 1.0);
}

std::optional<NeuronId> GammaGwr::maybe_insert(std::span<const double> x, NeuronId b, std::optional<NeuronId> s,
                                               double d_b, const InsertGate& gate) {
  const Neuron& bmu = neuron(b);
  if (!(activity(d_b) < config_.activity_threshold)) return std::nullopt;
  if (!(bmu.h < config_.habituation_threshold)) return std::nullopt;
  if (neurons_.size() >= config_.max_neurons) return std::nullopt;
  if (gate && !gate(*this, b)) return std::nullopt;

  Vector w(dim_);
  for (std::size_t i = 0; i < dim_; ++i) w[i] = 0.5 * (bmu.w[i] + x[i]);
  std::vector<Vector> contexts(config_.context_depth, Vector(dim_));
  for (std::size_t k = 0; k < config_.context_depth; ++k) {
    for (std::size_t i = 0; i < dim_; ++i) contexts[k][i] = 0.5 * (bmu.contexts[k][i] + context_.global[k][i]);
  }
  const NeuronId r = add_neuron(std::move(w), std::move(contexts));
  set_edge(r, b, 0);
  if (s) {
    set_edge(r, *s, 0);
    remove_edge(b, *s);
  }
  return r;
}

StepReport GammaGwr::train_step(std::span<const double> x, std::optional<int> label, const InsertGate& gate) {
  if (x.size() != dim_) throw ArgumentError("train_step: input dim " + std::to_string(x.size()) + ", expected " +
                                            std::to_string(dim_));
  update_global_context();
  StepReport report;

  if (neurons_.size() < 2) {
    // Bootstrap: the first two inputs become neurons.
    const NeuronId id = add_neuron(Vector(x.begin(), x.end()), context_.global);
    report.bmu = report.winner = id;
    report.inserted = id;
    report.activity = 1.0;
    if (label) neurons_.at(id).label_hist[*label] += 1.0;
    snapshot_prev(id);
    return report;
  }

  const BmuResult bmu = find_bmu(x);
  report.bmu = bmu.best;
  report.second = bmu.second;
  report.distance = bmu.distance;
  report.activity = activity(bmu.distance);
  const NeuronId b = bmu.best;

  if (auto it = adjacency_.find(b); it != adjacency_.end()) {
    for (auto& [other, age] : it->second) {
      ++age;
      adjacency_[other][b] = age;
    }
  }

  report.inserted = maybe_insert(x, b, bmu.second, bmu.distance, gate);
  if (!report.inserted) {
    if (bmu.second) set_edge(b, *bmu.second, 0);
    adapt(b, x);
    habituate(b, true);
    for (NeuronId n : neighbors(b)) habituate(n, false);
  }
  report.winner = report.inserted.value_or(b);

  std::vector<std::pair<NeuronId, NeuronId>> stale;
  for (const auto& e : edges()) {
    if (e.age > config_.max_edge_age) stale.emplace_back(e.a, e.b);
  }
  for (const auto& [a, c] : stale) remove_edge(a, c);
  for (auto it = neurons_.begin(); it != neurons_.end();) {
    if (!adjacency_.contains(it->first) && neurons_.size() > 2) {
      report.pruned.push_back(it->first);
      it = neurons_.erase(it);
    } else {
      ++it;
    }
  }

  if (label) mutable_neuron(report.winner).label_hist[*label] += 1.0;
  snapshot_prev(report.winner);
  return report;
}

BmuResult GammaGwr::track(ContextState& state, std::span<const double> x) const {
  advance_context(state, config_.beta);
  const BmuResult r = find_bmu(x, state.global);
  const Neuron& n = neuron(r.best);
  state.has_prev = true;
  state.prev_w = n.w;
  state.prev_contexts = n.contexts;
  return r;
}

bool GammaGwr::labeled() const {
  return std::any_of(neurons_.begin(), neurons_.end(), [](const auto& kv) { return !kv.second.label_hist.empty(); });
}

int GammaGwr::classify(std::span<const Vector> sequence) const {
  if (!labeled()) throw StateError("classify: network has no labeled neurons");
  ContextState state = fresh_context();
  std::map<int, double> votes;
  for (const auto& x : sequence) {
    const BmuResult r = track(state, x);
    const auto& hist = neuron(r.best).label_hist;
    double total = 0.0;
    for (const auto& [label, count] : hist) total += count;
    if (total <= 0.0) continue;
    for (const auto& [label, count] : hist) votes[label] += count / total;
  }
  const auto best = majority_label(votes);
  if (!best) throw StateError("classify: no labeled neuron matched the sequence");
  return *best;
}

double GammaGwr::quantization_error(std::span<const Vector> data) const {
  if (data.empty()) throw ArgumentError("quantization_error: empty dataset");
  double sum = 0.0;
  for (const auto& x : data) sum += find_bmu(x).distance;
  return sum / static_cast<double>(data.size());
}

nlohmann::json to_json(const GammaGwrConfig& c) {
  return {{"K", c.context_depth},         {"alpha", c.alpha},   {"beta", c.beta},
          {"eps_b", c.eps_b},             {"eps_n", c.eps_n},   {"a_T", c.activity_threshold},
          {"h_T", c.habituation_threshold}, {"tau_b", c.tau_b}, {"tau_n", c.tau_n},
          {"kappa", c.kappa},             {"max_edge_age", c.max_edge_age},
          {"max_neurons", c.max_neurons}};
}

GammaGwrConfig gwr_config_from_json(const nlohmann::json& j, std::size_t default_depth) {
  const std::size_t k = j.value("K", default_depth);
  GammaGwrConfig c = GammaGwrConfig::with_depth(k);
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<std::vector<double>>();
  c.beta = j.value("beta", c.beta);
  c.eps_b = j.value("eps_b", c.eps_b);
  c.eps_n = j.value("eps_n", c.eps_n);
  c.activity_threshold = j.value("a_T", c.activity_threshold);
  c.habituation_threshold = j.value("h_T", c.habituation_threshold);
  c.tau_b = j.value("tau_b", c.tau_b);
  c.tau_n = j.value("tau_n", c.tau_n);
  c.kappa = j.value("kappa", c.kappa);
  c.max_edge_age = j.value("max_edge_age", c.max_edge_age);
  c.max_neurons = j.value("max_neurons", c.max_neurons);
  c.validate();
  return c;
}

nlohmann::json GammaGwr::to_json() const {
  nlohmann::json neurons = nlohmann::json::array();
  for (const auto& [id, n] : neurons_) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [label, count] : n.label_hist) hist[std::to_string(label)] = count;
    neurons.push_back({{"id", id}, {"w", n.w}, {"contexts", n.contexts}, {"h", n.h}, {"label_hist", hist}});
  }
  nlohmann::json edge_list = nlohmann::json::array();
  for (const auto& e : edges()) edge_list.push_back({{"a", e.a}, {"b", e.b}, {"age", e.age}});
  return {{"config", ocl::to_json(config_)},
          {"dim", dim_},
          {"neurons", neurons},
          {"edges", edge_list},
          {"global_context", context_.global},
          {"prev", context_.has_prev ? nlohmann::json{{"w", context_.prev_w}, {"contexts", context_.prev_contexts}}
                                     : nlohmann::json(nullptr)}};
}

GammaGwr GammaGwr::from_json(const nlohmann::json& j) {
  GammaGwr net(gwr_config_from_json(j.at("config")), j.at("dim").get<std::size_t>());
  for (const auto& n : j.at("neurons")) {
    Neuron neuron;
    neuron.id = n.at("id").get<NeuronId>();
    neuron.w = n.at("w").get<Vector>();
    neuron.contexts = n.at("contexts").get<std::vector<Vector>>();
    neuron.h = n.at("h").get<double>();
    for (const auto& [label, count] : n.at("label_hist").items()) {
      neuron.label_hist[std::stoi(label)] = count.get<double>();
    }
    net.next_id_ = std::max(net.next_id_, neuron.id + 1);
    net.neurons_.emplace(neuron.id, std::move(neuron));
  }
  for (const auto& e : j.at("edges")) {
    net.set_edge(e.at("a").get<NeuronId>(), e.at("b").get<NeuronId>(), e.at("age").get<int>());
  }
  net.context_.global = j.at("global_context").get<std::vector<Vector>>();
  if (j.contains("prev") && !j.at("prev").is_null()) {
    net.context_.has_prev = true;
    net.context_.prev_w = j.at("prev").at("w").get<Vector>();
    net.context_.prev_contexts = j.at("prev").at("contexts").get<std::vector<Vector>>();
  }
  return net;
}

}  // namespace ocl
