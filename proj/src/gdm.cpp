#include "ocl/gdm.hpp"

#include <string>

#include "ocl/errors.hpp"

namespace ocl {

void TemporalSynapses::observe(NeuronId from, NeuronId to) {
  if (decay_ > 0.0) {
    for (auto& [key, s] : strength_) s *= 1.0 - decay_;
  }
  strength_[{to, from}] += 1.0;
}

double TemporalSynapses::at(NeuronId to, NeuronId from) const {
  const auto it = strength_.find({to, from});
  return it == strength_.end() ? 0.0 : it->second;
}

void TemporalSynapses::remove(NeuronId id) {
  std::erase_if(strength_, [id](const auto& kv) { return kv.first.first == id || kv.first.second == id; });
}

DualMemory::DualMemory(GdmConfig config, std::size_t dim)
    : config_(std::move(config)),
      gem_(config_.episodic, dim),
      gsm_(config_.semantic, dim),
      synapses_(config_.synapse_decay) {
  if (!(config_.synapse_decay >= 0.0 && config_.synapse_decay < 1.0)) {
    throw ConfigError("GDM: synapse decay must lie in [0,1)");
  }
}

void DualMemory::observe_transition(NeuronId prev, NeuronId cur) {
  if (!gem_.contains(prev) || !gem_.contains(cur)) {
    throw StateError("observe_transition: neuron " + std::to_string(gem_.contains(prev) ? cur : prev) +
                     " is not live");
  }
  synapses_.observe(prev, cur);
}

Rnat DualMemory::generate_rnat(NeuronId seed) const {
  if (gem_.size() < 2) throw StateError("generate_rnat: episodic memory needs at least 2 neurons");
  const Neuron& s0 = gem_.neuron(seed);
  Rnat r;
  r.label = majority_label(s0.label_hist);
  r.ids.push_back(seed);
  r.weights.push_back(s0.w);
  NeuronId prev = seed;
  for (std::size_t i = 1; i <= lambda(); ++i) {
    std::optional<NeuronId> best;
    double best_strength = 0.0;
    for (const auto& [id, n] : gem_.neurons()) {
      if (id == seed) continue;
      const double p = synapses_.at(id, prev);
      if (!best || p > best_strength) {
        best = id;
        best_strength = p;
      }
    }
    r.ids.push_back(*best);
    r.weights.push_back(gem_.neuron(*best).w);
    prev = *best;
  }
  return r;
}

GammaGwr::InsertGate DualMemory::category_gate(int category) const {
  return [category](const GammaGwr& net, NeuronId bmu) {
    return majority_label(net.neuron(bmu).label_hist) != std::optional<int>(category);
  };
}

void DualMemory::semantic_step(std::span<const double> x, std::optional<int> category, EpisodeReport* report) {
  const Vector y = gem_to_gsm(x);
  GammaGwr::InsertGate gate;
  bool vetoed = false;
  if (category) {
    gate = [&, inner = category_gate(*category)](const GammaGwr& net, NeuronId bmu) {
      const bool allow = inner(net, bmu);
      vetoed = !allow;
      return allow;
    };
  }
  const auto r = gsm_.train_step(y, category, gate);
  if (report) {
    if (r.inserted) ++report->semantic_insertions;
    if (vetoed) ++report->semantic_gated;
  }
}

std::size_t DualMemory::replay_all() {
  if (gem_.size() < 2) return 0;
  std::vector<Rnat> trajectories;
  trajectories.reserve(gem_.size());
  for (const auto& [id, n] : gem_.neurons()) trajectories.push_back(generate_rnat(id));

  const ContextState gem_ctx = gem_.context();
  const ContextState gsm_ctx = gsm_.context();
  for (const auto& rnat : trajectories) {
    gem_.reset_context();
    gsm_.reset_context();
    std::optional<int> category;
    if (rnat.label) {
      const auto it = instance_to_category_.find(*rnat.label);
      if (it != instance_to_category_.end()) category = it->second;
    }
    for (const auto& w : rnat.weights) {
      const auto r = gem_.train_step(w, rnat.label);
      for (NeuronId dead : r.pruned) synapses_.remove(dead);
      semantic_step(w, category, nullptr);
    }
  }
  gem_.set_context(gem_ctx);
  gsm_.set_context(gsm_ctx);
  return trajectories.size();
}

Vector DualMemory::gem_to_gsm(std::span<const double> x) const {
  if (gem_.size() == 0) throw StateError("gem_to_gsm: episodic memory is empty");
  return gem_.neuron(gem_.find_bmu(x).best).w;
}

EpisodeReport DualMemory::train_episode(std::span<const LabeledFrame> frames) {
  if (frames.empty()) throw ArgumentError("train_episode: empty batch");
  for (const auto& f : frames) {
    const auto [it, fresh] = instance_to_category_.emplace(f.instance, f.category);
    if (!fresh && it->second != f.category) {
      throw ArgumentError("train_episode: instance " + std::to_string(f.instance) +
                          " already belongs to category " + std::to_string(it->second));
    }
  }

  EpisodeReport report;
  if (config_.replay_enabled && episodes_ > 0) report.replayed_trajectories = replay_all();

  std::optional<NeuronId> prev;
  for (const auto& f : frames) {
    const auto r = gem_.train_step(f.x, f.instance);
    for (NeuronId dead : r.pruned) synapses_.remove(dead);
    if (r.inserted) ++report.episodic_insertions;
    if (prev && gem_.contains(*prev)) observe_transition(*prev, r.winner);
    prev = r.winner;
    semantic_step(f.x, f.category, &report);
    ++report.frames;
  }
  ++episodes_;
  report.episodic_neurons = gem_.size();
  report.semantic_neurons = gsm_.size();
  return report;
}

int DualMemory::classify_instance(std::span<const Vector> sequence) const { return gem_.classify(sequence); }

int DualMemory::classify_category(std::span<const Vector> sequence) const {
  if (!gsm_.labeled()) throw StateError("classify_category: semantic memory has no labels");
  ContextState gem_state = gem_.fresh_context();
  ContextState gsm_state = gsm_.fresh_context();
  std::map<int, double> votes;
  for (const auto& x : sequence) {
    const auto e = gem_.track(gem_state, x);
    const auto s = gsm_.track(gsm_state, gem_.neuron(e.best).w);
    const auto& hist = gsm_.neuron(s.best).label_hist;
    double total = 0.0;
    for (const auto& [label, count] : hist) total += count;
    if (total <= 0.0) continue;
    for (const auto& [label, count] : hist) votes[label] += count / total;
  }
  const auto best = majority_label(votes);
  if (!best) throw StateError("classify_category: no labeled semantic neuron matched the sequence");
  return *best;
}

nlohmann::json DualMemory::to_json() const {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& [key, s] : synapses_.entries()) p.push_back({key.first, key.second, s});
  nlohmann::json inst = nlohmann::json::object();
  for (const auto& [i, c] : instance_to_category_) inst[std::to_string(i)] = c;
  return {{"episodic", gem_.to_json()},
          {"semantic", gsm_.to_json()},
          {"temporal_synapses", p},
          {"lambda", lambda()},
          {"replay_enabled", config_.replay_enabled},
          {"instance_to_category", inst}};
}

}  // namespace ocl
