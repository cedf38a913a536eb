#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ocl/gwr.hpp"

namespace ocl {

/// Directed transition strengths between episodic neurons. at(to, from) is
/// the strength of `from` being followed by `to`.
class TemporalSynapses {
 public:
  explicit TemporalSynapses(double decay = 0.0) : decay_(decay) {}

  void observe(NeuronId from, NeuronId to);
  double at(NeuronId to, NeuronId from) const;
  /// Drops every synapse into or out of `id`.
  void remove(NeuronId id);
  const std::map<std::pair<NeuronId, NeuronId>, double>& entries() const { return strength_; }

 private:
  std::map<std::pair<NeuronId, NeuronId>, double> strength_;  // key (to, from)
  double decay_;
};

/// Reactivated neural activity trajectory: s(0) = seed, s(i) the strongest
/// successor of s(i-1) other than the seed, i = 1..lambda.
struct Rnat {
  std::vector<NeuronId> ids;
  std::vector<Vector> weights;
  std::optional<int> label;  // majority instance label of the seed neuron
};

struct GdmConfig {
  GammaGwrConfig episodic = GammaGwrConfig::with_depth(2);
  GammaGwrConfig semantic = GammaGwrConfig::with_depth(2);
  bool replay_enabled = true;
  double synapse_decay = 0.0;
};

struct LabeledFrame {
  Vector x;
  int instance = 0;
  int category = 0;
};

struct EpisodeReport {
  std::size_t frames = 0;
  std::size_t episodic_insertions = 0;
  std::size_t semantic_insertions = 0;
  std::size_t semantic_gated = 0;  // semantic steps where growth was vetoed by a correct prediction
  std::size_t replayed_trajectories = 0;
  std::size_t episodic_neurons = 0;
  std::size_t semantic_neurons = 0;
};

/// Growing dual memory: an unsupervised episodic network with temporal
/// synapses feeding its BMU prototypes to a label-modulated semantic network.
/// RNATs generated from the episodic synapses are replayed to both networks
/// between learning episodes; no input example is ever stored.
class DualMemory {
 public:
  DualMemory(GdmConfig config, std::size_t dim);

  const GammaGwr& episodic() const { return gem_; }
  const GammaGwr& semantic() const { return gsm_; }
  GammaGwr& episodic() { return gem_; }
  GammaGwr& semantic() { return gsm_; }
  const TemporalSynapses& synapses() const { return synapses_; }
  const GdmConfig& config() const { return config_; }

  /// K_EM + K_SM + 1. A trajectory holds lambda + 1 prototypes s(0..lambda).
  std::size_t lambda() const { return config_.episodic.context_depth + config_.semantic.context_depth + 1; }

  void observe_transition(NeuronId prev, NeuronId cur);
  Rnat generate_rnat(NeuronId seed) const;
  /// Replays one RNAT per episodic neuron; returns the number replayed.
  std::size_t replay_all();
  Vector gem_to_gsm(std::span<const double> x) const;

  /// Trains on one learning episode. When replay is enabled, the RNATs of the
  /// memory state left by the previous episode are replayed first.
  EpisodeReport train_episode(std::span<const LabeledFrame> frames);

  int classify_instance(std::span<const Vector> sequence) const;
  int classify_category(std::span<const Vector> sequence) const;

  const std::map<int, int>& instance_categories() const { return instance_to_category_; }
  std::size_t episodes() const { return episodes_; }

  nlohmann::json to_json() const;

 private:
  GammaGwr::InsertGate category_gate(int category) const;
  void semantic_step(std::span<const double> x, std::optional<int> category, EpisodeReport* report);

  GdmConfig config_;
  GammaGwr gem_;
  GammaGwr gsm_;
  TemporalSynapses synapses_;
  std::map<int, int> instance_to_category_;
  std::size_t episodes_ = 0;
};

}  // namespace ocl
