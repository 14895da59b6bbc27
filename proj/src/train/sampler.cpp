#include "wsvad/train/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "wsvad/common/error.hpp"

namespace wsvad::train {

BalancedSampler::BalancedSampler(const std::vector<std::vector<std::size_t>>& clip_events,
                                 std::size_t num_events, std::uint64_t seed)
    : rng_(seed) {
  std::vector<std::vector<std::size_t>> by_event(num_events);
  std::vector<std::size_t> unlabeled;
  for (std::size_t clip = 0; clip < clip_events.size(); ++clip) {
    if (clip_events[clip].empty()) unlabeled.push_back(clip);
    for (std::size_t e : clip_events[clip]) {
      if (e >= num_events) throw InvalidInput("sampler: event index out of range");
      if (by_event[e].empty() || by_event[e].back() != clip) by_event[e].push_back(clip);
    }
  }
  for (std::size_t e = 0; e < num_events; ++e) {
    if (by_event[e].empty()) {
      skipped_.push_back(e);
    } else {
      buckets_.push_back(std::move(by_event[e]));
    }
  }
  if (!unlabeled.empty()) buckets_.push_back(std::move(unlabeled));
  if (buckets_.empty()) throw InvalidInput("sampler: no clips to draw from");
  cycle_.resize(buckets_.size());
  pos_ = cycle_.size();
}

std::size_t BalancedSampler::next() {
  if (pos_ == cycle_.size()) {
    std::iota(cycle_.begin(), cycle_.end(), std::size_t{0});
    std::shuffle(cycle_.begin(), cycle_.end(), rng_);
    pos_ = 0;
  }
  const auto& bucket = buckets_[cycle_[pos_++]];
  std::uniform_int_distribution<std::size_t> pick(0, bucket.size() - 1);
  return bucket[pick(rng_)];
}

std::vector<std::size_t> BalancedSampler::next_batch(std::size_t batch_size) {
  std::vector<std::size_t> batch(batch_size);
  for (auto& i : batch) i = next();
  return batch;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace wsvad::train
