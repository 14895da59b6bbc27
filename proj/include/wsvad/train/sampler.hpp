#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wsvad/common/rng.hpp"

namespace wsvad::train {

/// Event-balanced clip sampler. Every draw takes the next event of a
/// shuffled event cycle (reshuffled when exhausted) and then a uniformly
/// random clip containing that event, so rare events are oversampled.
/// Clips without any event form one extra bucket that takes part in the
/// cycle like an event. Events without clips are skipped.
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<std::vector<std::size_t>>& clip_events,
                  std::size_t num_events, std::uint64_t seed);

  std::size_t next();
  std::vector<std::size_t> next_batch(std::size_t batch_size);

  /// Events that have no clip and never get drawn.
  const std::vector<std::size_t>& skipped_events() const noexcept { return skipped_; }
  std::size_t buckets() const noexcept { return buckets_.size(); }

 private:
  std::vector<std::vector<std::size_t>> buckets_;
  std::vector<std::size_t> skipped_;
  std::vector<std::size_t> cycle_;
  std::size_t pos_ = 0;
  Rng rng_;
};

/// A uniformly shuffled permutation of [0, n).
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

}  // namespace wsvad::train
