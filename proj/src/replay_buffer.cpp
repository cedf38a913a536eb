#include "ocl/replay_buffer.hpp"

#include <algorithm>
#include <numeric>

#include "ocl/errors.hpp"

namespace ocl {

LatentReplayBuffer::LatentReplayBuffer(std::size_t capacity, std::size_t replay_layer, std::size_t latent_dim,
                                       std::uint64_t seed)
    : capacity_(capacity), replay_layer_(replay_layer), latent_dim_(latent_dim), rng_(seed) {}

std::size_t LatentReplayBuffer::quota() const {
  if (classes_.empty()) return capacity_;
  return capacity_ / classes_.size();
}

void LatentReplayBuffer::shrink_to_quota() {
  const std::size_t q = quota();
  for (auto& [label, slots] : classes_) {
    // A uniform subset of a uniform sample is still uniform.
    while (slots.kept.size() > q) {
      const std::size_t victim = rng_.below(slots.kept.size());
      slots.kept.erase(slots.kept.begin() + static_cast<std::ptrdiff_t>(victim));
    }
  }
}

void LatentReplayBuffer::update(std::span<const ReplayEntry> new_entries) {
  for (const auto& e : new_entries) {
    if (e.latent.size() != latent_dim_) {
      throw ArgumentError("buffer_update: latent dim " + std::to_string(e.latent.size()) + ", expected " +
                          std::to_string(latent_dim_));
    }
  }
  for (const auto& e : new_entries) {
    if (!classes_.contains(e.label)) {
      classes_[e.label];
      shrink_to_quota();
    }
    auto& slots = classes_[e.label];
    const std::size_t q = quota();
    ++slots.seen;
    if (slots.kept.size() < q) {
      slots.kept.push_back(e);
    } else if (q > 0) {
      const std::size_t j = rng_.below(slots.seen);
      if (j < q) slots.kept[j] = e;
    }
  }
}

std::vector<const ReplayEntry*> LatentReplayBuffer::entries() const {
  std::vector<const ReplayEntry*> out;
  for (const auto& [label, slots] : classes_) {
    for (const auto& e : slots.kept) out.push_back(&e);
  }
  return out;
}

std::vector<const ReplayEntry*> LatentReplayBuffer::sample(std::size_t n) {
  auto all = entries();
  n = std::min(n, all.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng_.below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(n);
  return all;
}

std::size_t LatentReplayBuffer::size() const {
  std::size_t s = 0;
  for (const auto& [label, slots] : classes_) s += slots.kept.size();
  return s;
}

std::size_t LatentReplayBuffer::count(int label) const {
  const auto it = classes_.find(label);
  return it == classes_.end() ? 0 : it->second.kept.size();
}

}  // namespace ocl
