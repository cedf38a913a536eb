#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "ocl/linalg.hpp"
#include "ocl/rng.hpp"

namespace ocl {

enum class CwrVariant { Cwr, CwrPlus, CwrStar };
enum class HeadInit { Gaussian001, Zero };

struct ConsolidationPolicy {
  CwrVariant variant = CwrVariant::CwrPlus;
  double batch_weight = 1.0;  // w_i, plain CWR only
  HeadInit init = HeadInit::Zero;

  static ConsolidationPolicy cwr(double batch_weight = 1.0, HeadInit init = HeadInit::Gaussian001) {
    return {CwrVariant::Cwr, batch_weight, init};
  }
  static ConsolidationPolicy cwr_plus() { return {CwrVariant::CwrPlus, 1.0, HeadInit::Zero}; }
  static ConsolidationPolicy cwr_star() { return {CwrVariant::CwrStar, 1.0, HeadInit::Zero}; }

  /// CWR+ and CWR* require zero init and unit batch weight.
  void validate() const;
};

/// Output layer with consolidated (cw, used for inference) and temporary
/// (tw, used for training) weights. No bias terms.
struct HeadState {
  Matrix cw;
  Matrix tw;
  std::vector<int> past_counts;
  std::set<int> known_classes;

  HeadState() = default;
  HeadState(std::size_t n_classes, std::size_t feature_dim)
      : cw(n_classes, feature_dim), tw(n_classes, feature_dim), past_counts(n_classes, 0) {}

  std::size_t n_classes() const { return cw.rows; }
  std::size_t feature_dim() const { return cw.cols; }
};

void reinit_tw(HeadState& head, const ConsolidationPolicy& policy, Rng& rng);

/// CWR*: start tw rows of already consolidated classes of the coming batch
/// from their consolidated values.
void reload_known_rows(HeadState& head, const std::set<int>& batch_classes);

struct LabeledLatent {
  std::vector<double> latent;
  int label = 0;
};

struct HeadTrainConfig {
  std::size_t epochs = 1;
  double lr = 0.01;
  std::size_t minibatch = 1;
};

/// Softmax regression on tw over the given latents, mini-batches taken in
/// order. Returns the mean loss of each epoch. cw is not touched.
std::vector<double> train_head_batch(HeadState& head, std::span<const LabeledLatent> features,
                                     const HeadTrainConfig& config);

/// Adds the gradient of softmax cross-entropy w.r.t. tw into `dtw` and
/// returns the loss. When `dlatent` is non-null it receives d(loss)/d(latent).
double accumulate_head_gradient(const Matrix& tw, std::span<const double> latent, int label, Matrix& dtw,
                                std::vector<double>* dlatent);

/// tw <- tw - lr * dtw / count.
void apply_head_step(HeadState& head, const Matrix& dtw, std::size_t count, double lr);

void consolidate(HeadState& head, const std::set<int>& batch_classes, const ConsolidationPolicy& policy);

/// argmax of cw * latent; ties go to the lowest class id.
int predict(const HeadState& head, std::span<const double> latent);

nlohmann::json to_json(const HeadState& head);
HeadState head_from_json(const nlohmann::json& j);

}  // namespace ocl
