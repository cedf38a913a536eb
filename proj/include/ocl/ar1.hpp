#pragma once

#include <cstddef>
#include <vector>

#include "ocl/backbone.hpp"
#include "ocl/heads.hpp"
#include "ocl/replay_buffer.hpp"
#include "ocl/rng.hpp"
#include "ocl/si.hpp"
#include "ocl/stream.hpp"

namespace ocl {

struct Ar1Config {
  std::size_t epochs = 2;
  double lr = 0.05;
  std::size_t minibatch = 16;
  /// Replay patterns per mini-batch, as a fraction of the fresh mini-batch size.
  double replay_fraction = 0.5;
  /// CWR*: start tw rows of known classes from cw.
  bool reload_known = false;
};

struct BatchReport {
  std::vector<double> epoch_loss;
  std::size_t replayed = 0;
  double penalty_after = 0.0;
};

/// One training batch of a network + CWR-family head, optionally regularized
/// by SI on the network parameters and rehearsing from a latent buffer.
///
/// Per mini-batch: fresh patterns are forwarded from the input; replay
/// patterns are injected at the buffer's replay layer and their backward pass
/// stops there. The mean task gradient plus the SI penalty gradient drives
/// one SGD step of the network (honouring per-layer multipliers) and of tw.
/// After the epochs the head is consolidated on the batch classes, SI
/// importance is consolidated and the batch's replay-layer activations are
/// offered to the buffer.
BatchReport train_head_network_batch(Network& net, HeadState& head, const ConsolidationPolicy& policy, SIState* si,
                                     LatentReplayBuffer* buffer, const TrainingBatch& batch,
                                     const Ar1Config& config, Rng& rng);

/// train_head_network_batch restricted to the CWR+ / CWR* policies.
BatchReport ar1_train_batch(Network& net, HeadState& head, const ConsolidationPolicy& policy, SIState* si,
                            LatentReplayBuffer* buffer, const TrainingBatch& batch, const Ar1Config& config,
                            Rng& rng);

/// Replay-layer activations of `batch` under the current network.
std::vector<ReplayEntry> replay_entries(const Network& net, std::size_t replay_layer, const TrainingBatch& batch);

}  // namespace ocl
