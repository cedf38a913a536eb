#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace ocl {

enum class Activation { Rectifier, Identity };

struct LayerSpec {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  Activation activation = Activation::Rectifier;
  /// Scales the learning rate of this layer; 0 freezes it.
  double lr_multiplier = 1.0;

  bool operator==(const LayerSpec&) const = default;
};

/// All parameters (and gradients, and update deltas) live in one flat vector.
/// Layer l occupies [offset(l), offset(l) + out*in) for its row-major weights,
/// followed by `out` biases.
using ParamVector = std::vector<double>;

/// Feedforward network. Layers are numbered 1..depth; layer l maps activation
/// index l-1 to activation index l, activation 0 being the input.
class Network {
 public:
  Network() = default;
  /// Weights ~ N(0, 2/in_dim), biases 0.
  Network(std::vector<LayerSpec> layers, std::uint64_t seed);

  std::size_t depth() const { return specs_.size(); }
  const LayerSpec& spec(std::size_t layer) const { return specs_.at(layer - 1); }
  void set_lr_multiplier(std::size_t layer, double m);

  std::size_t input_dim() const { return specs_.front().in_dim; }
  std::size_t output_dim() const { return specs_.back().out_dim; }
  /// Width of activation index k (k = 0 is the input).
  std::size_t width(std::size_t k) const;

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer - 1); }
  std::size_t bias_offset(std::size_t layer) const {
    const auto& s = spec(layer);
    return weight_offset(layer) + s.in_dim * s.out_dim;
  }
  std::size_t layer_param_count(std::size_t layer) const {
    const auto& s = spec(layer);
    return s.in_dim * s.out_dim + s.out_dim;
  }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::size_t param_count() const { return params_.size(); }
  std::uint64_t seed() const { return seed_; }

  bool operator==(const Network&) const = default;

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::size_t> offsets_;
  ParamVector params_;
  std::uint64_t seed_ = 0;
};

/// Activations of one forward pass, from activation index `first` up to the
/// network output.
struct ActivationRecord {
  std::size_t first = 0;
  std::vector<std::vector<double>> values;

  const std::vector<double>& at(std::size_t k) const { return values.at(k - first); }
  const std::vector<double>& output() const { return values.back(); }
  std::size_t last() const { return first + values.size() - 1; }
};

ActivationRecord forward(const Network& net, std::span<const double> x);

/// Runs layers index+1..depth on an activation injected at `index`. The
/// returned record starts at `index` and holds the injected vector first.
ActivationRecord forward_from(const Network& net, std::size_t index, std::span<const double> latent);

struct LossResult {
  double loss = 0.0;
  std::vector<double> dlogits;
};

/// Max-shifted softmax cross-entropy.
LossResult softmax_xent(std::span<const double> logits, std::size_t y);

/// Gradients of a scalar loss given d(loss)/d(output). Layers below
/// `stop_below` receive zero gradient; the default is the lowest layer the
/// record can reach.
ParamVector backward(const Network& net, const ActivationRecord& record, std::span<const double> dout,
                     std::optional<std::size_t> stop_below = std::nullopt);

/// Same as backward() but adds into `grads` (sized param_count()).
void accumulate_backward(const Network& net, const ActivationRecord& record, std::span<const double> dout,
                         std::optional<std::size_t> stop_below, ParamVector& grads);

/// p <- p - lr * lr_multiplier(layer) * grad. Returns the applied deltas.
/// Throws NumericError on a non-finite gradient.
ParamVector sgd_step(Network& net, std::span<const double> grads, double lr);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Rectifier hidden layers of the given widths followed by an output layer.
std::vector<LayerSpec> mlp_specs(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 std::optional<std::size_t> output_dim);

}  // namespace ocl
