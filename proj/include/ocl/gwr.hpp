#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ocl {

using NeuronId = std::uint32_t;
using Vector = std::vector<double>;

struct GammaGwrConfig {
  std::size_t context_depth = 2;  // K
  std::vector<double> alpha;      // K + 1 distance weights
  double beta = 0.5;
  double eps_b = 0.1;
  double eps_n = 0.01;
  double activity_threshold = 0.85;    // a_T
  double habituation_threshold = 0.3;  // h_T
  double tau_b = 0.3;
  double tau_n = 0.1;
  double kappa = 1.05;
  int max_edge_age = 50;
  std::size_t max_neurons = 1000;

  /// Defaults with alpha_k proportional to 0.7 * 0.5^k, normalized to sum 1.
  static GammaGwrConfig with_depth(std::size_t k);
  void validate() const;
};

struct Neuron {
  NeuronId id = 0;
  Vector w;
  std::vector<Vector> contexts;  // K descriptors
  double h = 1.0;
  std::map<int, double> label_hist;
};

/// Temporal context carried from one input to the next: the global context
/// descriptors C_1..C_K and a snapshot of the previous BMU.
struct ContextState {
  std::vector<Vector> global;
  bool has_prev = false;
  Vector prev_w;
  std::vector<Vector> prev_contexts;
};

struct BmuResult {
  NeuronId best = 0;
  std::optional<NeuronId> second;
  double distance = 0.0;
};

struct StepReport {
  NeuronId bmu = 0;
  std::optional<NeuronId> second;
  double distance = 0.0;
  double activity = 0.0;
  std::optional<NeuronId> inserted;
  /// Neuron that represents this input afterwards: the inserted neuron if
  /// any, otherwise the BMU.
  NeuronId winner = 0;
  std::vector<NeuronId> pruned;
};

/// a = exp(-d_b).
double activity(double distance);

/// Growing recurrent self-organizing network with temporal context (Gamma-GWR).
class GammaGwr {
 public:
  /// Extra insertion condition evaluated on the BMU, used for top-down
  /// modulation of growth.
  using InsertGate = std::function<bool(const GammaGwr&, NeuronId bmu)>;

  GammaGwr(GammaGwrConfig config, std::size_t dim);

  const GammaGwrConfig& config() const { return config_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return neurons_.size(); }
  bool contains(NeuronId id) const { return neurons_.contains(id); }
  const Neuron& neuron(NeuronId id) const;
  const std::map<NeuronId, Neuron>& neurons() const { return neurons_; }

  /// Contexts default to zero vectors.
  NeuronId add_neuron(Vector w, std::vector<Vector> contexts = {});

  std::vector<NeuronId> neighbors(NeuronId id) const;
  std::optional<int> edge_age(NeuronId a, NeuronId b) const;
  std::size_t edge_count() const;
  struct Edge {
    NeuronId a = 0;
    NeuronId b = 0;
    int age = 0;
  };
  std::vector<Edge> edges() const;

  const ContextState& context() const { return context_; }
  void set_context(ContextState state) { context_ = std::move(state); }
  void reset_context();
  ContextState fresh_context() const;

  /// d_j = alpha_0 |x - w_j| + sum_k alpha_k |C_k - c_jk| under the network's
  /// current global context.
  double distance(NeuronId j, std::span<const double> x) const;
  double distance(const Neuron& n, std::span<const double> x, const std::vector<Vector>& global) const;

  /// Best and second-best matching units; ties go to the lowest id.
  BmuResult find_bmu(std::span<const double> x) const;
  BmuResult find_bmu(std::span<const double> x, const std::vector<Vector>& global) const;

  /// C_k = beta w_prev + (1 - beta) c_prev,k-1 with c_prev,0 = w_prev.
  void update_global_context();
  static void advance_context(ContextState& state, double beta);

  void adapt(NeuronId b, std::span<const double> x);
  void habituate(NeuronId i, bool is_bmu);
  std::optional<NeuronId> maybe_insert(std::span<const double> x, NeuronId b, std::optional<NeuronId> s,
                                       double d_b, const InsertGate& gate = {});

  StepReport train_step(std::span<const double> x, std::optional<int> label = std::nullopt,
                        const InsertGate& gate = {});

  /// Read-only evaluation: advances `state` by one input and returns its BMU.
  BmuResult track(ContextState& state, std::span<const double> x) const;

  /// Sums the normalized label histograms of the BMUs along the sequence,
  /// contexts starting from zero. Throws StateError when no BMU is labeled.
  int classify(std::span<const Vector> sequence) const;

  /// Mean BMU distance with contexts frozen at the current state.
  double quantization_error(std::span<const Vector> data) const;

  bool labeled() const;

  nlohmann::json to_json() const;
  static GammaGwr from_json(const nlohmann::json& j);

 private:
  Neuron& mutable_neuron(NeuronId id);
  void set_edge(NeuronId a, NeuronId b, int age);
  void remove_edge(NeuronId a, NeuronId b);
  void snapshot_prev(NeuronId id);

  GammaGwrConfig config_;
  std::size_t dim_;
  std::map<NeuronId, Neuron> neurons_;
  std::map<NeuronId, std::map<NeuronId, int>> adjacency_;
  ContextState context_;
  NeuronId next_id_ = 0;
};

/// argmax of a label histogram, ties to the lowest label; nullopt if empty.
std::optional<int> majority_label(const std::map<int, double>& hist);

nlohmann::json to_json(const GammaGwrConfig& config);
GammaGwrConfig gwr_config_from_json(const nlohmann::json& j, std::size_t default_depth = 2);

}  // namespace ocl
