#pragma once

#include <cstddef>
#include <limits>
#include <span>

namespace wsvad::train {

/// Reduce-on-plateau learning rate: lr = lr0 * factor^k, where k counts
/// completed runs of `patience` consecutive evaluations that failed to
/// strictly improve on the best loss so far. A NaN loss never improves.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double lr0 = 1e-3, double factor = 0.1, std::size_t patience = 5);

  /// Records one cross-validation loss and returns the resulting lr.
  double observe(double cv_loss);

  double lr() const noexcept;
  double best() const noexcept { return best_; }
  std::size_t reductions() const noexcept { return reductions_; }
  std::size_t stale() const noexcept { return stale_; }
  std::size_t evaluations() const noexcept { return evaluations_; }

  /// Restores counters saved from a checkpoint.
  void restore(double best, std::size_t stale, std::size_t reductions,
               std::size_t evaluations);

 private:
  double lr0_;
  double factor_;
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  std::size_t reductions_ = 0;
  std::size_t evaluations_ = 0;
};

/// Replays a whole history through a fresh scheduler.
double plateau_lr(std::span<const double> history, double lr0 = 1e-3, double factor = 0.1,
                  std::size_t patience = 5);

}  // namespace wsvad::train
