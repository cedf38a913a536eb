#include "ocl/ar1.hpp"

#include <algorithm>
#include <cmath>

#include "ocl/errors.hpp"

namespace ocl {

std::vector<ReplayEntry> replay_entries(const Network& net, std::size_t replay_layer, const TrainingBatch& batch) {
  std::vector<ReplayEntry> out;
  out.reserve(batch.examples.size());
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    const auto& e = batch.examples[i];
    const auto rec = forward(net, e.x);
    ReplayEntry entry;
    entry.latent = rec.at(replay_layer);
    entry.label = e.y;
    entry.source = i < batch.source_indices.size() ? static_cast<std::int64_t>(batch.source_indices[i]) : -1;
    out.push_back(std::move(entry));
  }
  return out;
}

BatchReport train_head_network_batch(Network& net, HeadState& head, const ConsolidationPolicy& policy, SIState* si,
                                     LatentReplayBuffer* buffer, const TrainingBatch& batch,
                                     const Ar1Config& config, Rng& rng) {
  if (batch.examples.empty()) throw ArgumentError("training batch is empty");
  if (head.feature_dim() != net.output_dim()) throw ArgumentError("head feature dim does not match network output");
  if (buffer && buffer->replay_layer() > net.depth()) throw ArgumentError("replay layer above network output");
  if (si && si->theta_ref.size() != net.param_count()) throw ArgumentError("SI state does not match network");

  const std::size_t mb = std::max<std::size_t>(1, config.minibatch);
  const auto n_replay = static_cast<std::size_t>(std::llround(config.replay_fraction * static_cast<double>(mb)));
  const std::size_t replay_layer = buffer ? buffer->replay_layer() : 0;
  const bool replaying = buffer && n_replay > 0 && buffer->size() > 0;

  // Replay patterns are part of the training batch: their classes are
  // reloaded and consolidated together with the fresh ones.
  auto batch_classes = batch.classes();
  if (replaying) {
    for (const ReplayEntry* e : buffer->entries()) batch_classes.insert(e->label);
  }
  reinit_tw(head, policy, rng);
  if (config.reload_known && policy.variant == CwrVariant::CwrStar) reload_known_rows(head, batch_classes);

  bool train_net = false;
  for (std::size_t l = 1; l <= net.depth(); ++l) train_net = train_net || net.spec(l).lr_multiplier > 0.0;

  BatchReport report;
  std::vector<double> dlatent;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_total = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < batch.examples.size(); start += mb) {
      const std::size_t end = std::min(batch.examples.size(), start + mb);
      std::vector<const ReplayEntry*> replay;
      if (replaying) replay = buffer->sample(n_replay);

      ParamVector grads(train_net ? net.param_count() : 0, 0.0);
      Matrix dtw(head.tw.rows, head.tw.cols);
      for (std::size_t i = start; i < end; ++i) {
        const auto& e = batch.examples[i];
        const auto rec = forward(net, e.x);
        loss_total += accumulate_head_gradient(head.tw, rec.output(), e.y, dtw, train_net ? &dlatent : nullptr);
        if (train_net) accumulate_backward(net, rec, dlatent, std::nullopt, grads);
      }
      for (const ReplayEntry* p : replay) {
        const auto rec = forward_from(net, replay_layer, p->latent);
        loss_total += accumulate_head_gradient(head.tw, rec.output(), p->label, dtw, train_net ? &dlatent : nullptr);
        if (train_net) accumulate_backward(net, rec, dlatent, replay_layer + 1, grads);
      }
      const std::size_t count = (end - start) + replay.size();
      loss_count += count;
      report.replayed += replay.size();

      if (train_net) {
        const double inv = 1.0 / static_cast<double>(count);
        for (auto& g : grads) g *= inv;
        ParamVector total = grads;
        if (si) {
          const auto pen = si_penalty_grad(*si, net.params());
          for (std::size_t i = 0; i < total.size(); ++i) total[i] += pen[i];
        }
        const auto deltas = sgd_step(net, total, config.lr);
        if (si) si_accumulate(*si, grads, deltas);
      }
      apply_head_step(head, dtw, count, config.lr);
    }
    report.epoch_loss.push_back(loss_total / static_cast<double>(loss_count));
  }

  consolidate(head, batch_classes, policy);
  if (si) {
    si_consolidate(*si, net.params());
    report.penalty_after = si_penalty(*si, net.params());
  }
  if (buffer) {
    const auto entries = replay_entries(net, replay_layer, batch);
    buffer->update(entries);
  }
  return report;
}

BatchReport ar1_train_batch(Network& net, HeadState& head, const ConsolidationPolicy& policy, SIState* si,
                            LatentReplayBuffer* buffer, const TrainingBatch& batch, const Ar1Config& config,
                            Rng& rng) {
  if (policy.variant == CwrVariant::Cwr) throw ConfigError("AR1 requires a CWR+ or CWR* head policy");
  return train_head_network_batch(net, head, policy, si, buffer, batch, config, rng);
}

}  // namespace ocl
