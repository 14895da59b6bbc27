#include "wsvad/train/scheduler.hpp"

#include <cmath>

#include "wsvad/common/error.hpp"

namespace wsvad::train {

PlateauScheduler::PlateauScheduler(double lr0, double factor, std::size_t patience)
    : lr0_(lr0), factor_(factor), patience_(patience) {
  if (!(lr0 > 0.0)) throw InvalidInput("scheduler: lr0 must be positive");
  if (!(factor > 0.0 && factor <= 1.0)) throw InvalidInput("scheduler: factor must be in (0, 1]");
  if (patience == 0) throw InvalidInput("scheduler: patience must be at least 1");
}

double PlateauScheduler::observe(double cv_loss) {
  ++evaluations_;
  if (cv_loss < best_) {
    best_ = cv_loss;
    stale_ = 0;
  } else if (++stale_ == patience_) {
    ++reductions_;
    stale_ = 0;
  }
  return lr();
}

double PlateauScheduler::lr() const noexcept {
  return lr0_ * std::pow(factor_, static_cast<double>(reductions_));
}

void PlateauScheduler::restore(double best, std::size_t stale, std::size_t reductions,
                               std::size_t evaluations) {
  best_ = best;
  stale_ = stale;
  reductions_ = reductions;
  evaluations_ = evaluations;
}

double plateau_lr(std::span<const double> history, double lr0, double factor,
                  std::size_t patience) {
  PlateauScheduler s(lr0, factor, patience);
  for (double l : history) s.observe(l);
  return s.lr();
}

}  // namespace wsvad::train
