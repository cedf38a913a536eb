#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ocl/rng.hpp"

namespace ocl {

struct ReplayEntry {
  std::vector<double> latent;
  int label = 0;
  /// Dataset row the latent was computed from, -1 if unknown. Bookkeeping
  /// for the aging diagnostic only; never read by training.
  std::int64_t source = -1;
};

/// Bounded store of replay-layer activations with class-balanced reservoir
/// replacement: each known class gets capacity / |known classes| slots and
/// keeps a uniform sample of everything of that class offered so far.
class LatentReplayBuffer {
 public:
  LatentReplayBuffer(std::size_t capacity, std::size_t replay_layer, std::size_t latent_dim, std::uint64_t seed);

  void update(std::span<const ReplayEntry> new_entries);

  /// Up to `n` distinct entries drawn uniformly without replacement.
  std::vector<const ReplayEntry*> sample(std::size_t n);

  /// All entries, ordered by class then slot.
  std::vector<const ReplayEntry*> entries() const;
  std::size_t size() const;
  std::size_t count(int label) const;
  std::size_t capacity() const { return capacity_; }
  std::size_t replay_layer() const { return replay_layer_; }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t quota() const;

 private:
  struct ClassSlots {
    std::vector<ReplayEntry> kept;
    std::size_t seen = 0;
  };

  void shrink_to_quota();

  std::size_t capacity_;
  std::size_t replay_layer_;
  std::size_t latent_dim_;
  std::map<int, ClassSlots> classes_;
  Rng rng_;
};

/// Free-function form of LatentReplayBuffer::update.
inline void buffer_update(LatentReplayBuffer& buffer, std::span<const ReplayEntry> new_entries) {
  buffer.update(new_entries);
}

}  // namespace ocl
