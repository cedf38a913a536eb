#include "ocl/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ocl/backbone.hpp"
#include "ocl/errors.hpp"

namespace ocl {

void ConsolidationPolicy::validate() const {
  if (variant != CwrVariant::Cwr && (init != HeadInit::Zero || batch_weight != 1.0)) {
    throw ConfigError("CWR+ and CWR* use zero init and unit batch weight");
  }
  if (!std::isfinite(batch_weight)) throw ConfigError("batch weight must be finite");
}

void reinit_tw(HeadState& head, const ConsolidationPolicy& policy, Rng& rng) {
  policy.validate();
  if (policy.init == HeadInit::Zero) {
    std::fill(head.tw.data.begin(), head.tw.data.end(), 0.0);
  } else {
    for (auto& v : head.tw.data) v = rng.normal(0.0, 0.01);
  }
}

void reload_known_rows(HeadState& head, const std::set<int>& batch_classes) {
  for (int c : batch_classes) {
    if (!head.known_classes.contains(c)) continue;
    const auto src = head.cw.row(static_cast<std::size_t>(c));
    std::copy(src.begin(), src.end(), head.tw.row(static_cast<std::size_t>(c)).begin());
  }
}

double accumulate_head_gradient(const Matrix& tw, std::span<const double> latent, int label, Matrix& dtw,
                                std::vector<double>* dlatent) {
  if (label < 0 || static_cast<std::size_t>(label) >= tw.rows) {
    throw ArgumentError("head: class " + std::to_string(label) + " outside class universe");
  }
  if (latent.size() != tw.cols) throw ArgumentError("head: latent dim mismatch");
  std::vector<double> logits(tw.rows);
  for (std::size_t c = 0; c < tw.rows; ++c) logits[c] = dot(tw.row(c), latent);
  const auto loss = softmax_xent(logits, static_cast<std::size_t>(label));
  for (std::size_t c = 0; c < tw.rows; ++c) {
    const double g = loss.dlogits[c];
    auto row = dtw.row(c);
    for (std::size_t k = 0; k < tw.cols; ++k) row[k] += g * latent[k];
  }
  if (dlatent) {
    dlatent->assign(tw.cols, 0.0);
    for (std::size_t c = 0; c < tw.rows; ++c) {
      const double g = loss.dlogits[c];
      const auto row = tw.row(c);
      for (std::size_t k = 0; k < tw.cols; ++k) (*dlatent)[k] += row[k] * g;
    }
  }
  return loss.loss;
}

void apply_head_step(HeadState& head, const Matrix& dtw, std::size_t count, double lr) {
  if (!all_finite(dtw.data)) throw NumericError("head: non-finite gradient");
  const double scale = lr / static_cast<double>(count);
  for (std::size_t i = 0; i < head.tw.data.size(); ++i) head.tw.data[i] -= scale * dtw.data[i];
}

std::vector<double> train_head_batch(HeadState& head, std::span<const LabeledLatent> features,
                                     const HeadTrainConfig& config) {
  if (features.empty()) throw ArgumentError("train_head_batch: no features");
  for (const auto& f : features) {
    if (f.label < 0 || static_cast<std::size_t>(f.label) >= head.n_classes()) {
      throw ArgumentError("train_head_batch: class " + std::to_string(f.label) + " outside class universe");
    }
  }
  const std::size_t mb = std::max<std::size_t>(1, config.minibatch);
  std::vector<double> curve;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t start = 0; start < features.size(); start += mb) {
      const std::size_t end = std::min(features.size(), start + mb);
      Matrix dtw(head.tw.rows, head.tw.cols);
      for (std::size_t i = start; i < end; ++i) {
        total += accumulate_head_gradient(head.tw, features[i].latent, features[i].label, dtw, nullptr);
      }
      apply_head_step(head, dtw, end - start, config.lr);
    }
    curve.push_back(total / static_cast<double>(features.size()));
  }
  return curve;
}

void consolidate(HeadState& head, const std::set<int>& batch_classes, const ConsolidationPolicy& policy) {
  policy.validate();
  if (batch_classes.empty()) return;
  for (int c : batch_classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= head.n_classes()) {
      throw ArgumentError("consolidate: class " + std::to_string(c) + " outside class universe");
    }
  }
  const std::size_t dim = head.feature_dim();

  // Mean over all tw entries of the rows of this batch's classes.
  double mean = 0.0;
  if (policy.variant != CwrVariant::Cwr) {
    for (int c : batch_classes) {
      for (double v : head.tw.row(static_cast<std::size_t>(c))) mean += v;
    }
    mean /= static_cast<double>(batch_classes.size() * dim);
  }

  for (int c : batch_classes) {
    const auto idx = static_cast<std::size_t>(c);
    auto cw = head.cw.row(idx);
    const auto tw = head.tw.row(idx);
    const double past = static_cast<double>(head.past_counts[idx]);
    for (std::size_t k = 0; k < dim; ++k) {
      switch (policy.variant) {
        case CwrVariant::Cwr: cw[k] = policy.batch_weight * tw[k]; break;
        case CwrVariant::CwrPlus: cw[k] = tw[k] - mean; break;
        case CwrVariant::CwrStar: cw[k] = (cw[k] * past + (tw[k] - mean)) / (past + 1.0); break;
      }
    }
    head.past_counts[idx] += 1;
    head.known_classes.insert(c);
  }
}

int predict(const HeadState& head, std::span<const double> latent) {
  if (latent.size() != head.feature_dim()) throw ArgumentError("predict: latent dim mismatch");
  int best = 0;
  double best_score = dot(head.cw.row(0), latent);
  for (std::size_t c = 1; c < head.n_classes(); ++c) {
    const double s = dot(head.cw.row(c), latent);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

nlohmann::json to_json(const HeadState& head) {
  return {{"n_classes", head.n_classes()},
          {"feature_dim", head.feature_dim()},
          {"cw", head.cw.data},
          {"tw", head.tw.data},
          {"past_counts", head.past_counts},
          {"known_classes", std::vector<int>(head.known_classes.begin(), head.known_classes.end())}};
}

HeadState head_from_json(const nlohmann::json& j) {
  HeadState head(j.at("n_classes").get<std::size_t>(), j.at("feature_dim").get<std::size_t>());
  head.cw.data = j.at("cw").get<std::vector<double>>();
  head.tw.data = j.at("tw").get<std::vector<double>>();
  head.past_counts = j.at("past_counts").get<std::vector<int>>();
  for (int c : j.at("known_classes").get<std::vector<int>>()) head.known_classes.insert(c);
  const auto n = head.n_classes() * head.feature_dim();
  if (head.cw.data.size() != n || head.tw.data.size() != n || head.past_counts.size() != head.n_classes()) {
    throw ParseError("head checkpoint: array size mismatch");
  }
  return head;
}

}  // namespace ocl
