#include "wsvad/dsp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wsvad/common/error.hpp"

namespace wsvad::dsp {

void SpecAugConfig::validate() const {
  if (time_masks < 0 || max_time_width < 0 || freq_masks < 0 ||
      max_freq_width < 0) {
    throw InvalidInput("specaug: counts and widths must be >= 0");
  }
}

LogMelSpec spec_augment(const LogMelSpec& spec, const SpecAugConfig& cfg) {
  cfg.validate();
  LogMelSpec out = spec;
  const int frames = static_cast<int>(spec.frames());
  const int bins = static_cast<int>(spec.bins());
  std::mt19937_64 rng(cfg.seed);

  for (int i = 0; i < cfg.time_masks; ++i) {
    const int width =
        std::min(std::uniform_int_distribution<int>(0, cfg.max_time_width)(rng),
                 frames);
    const int start = std::uniform_int_distribution<int>(0, frames - width)(rng);
    for (int t = start; t < start + width; ++t) {
      for (int d = 0; d < bins; ++d) out.values(t, d) = 0.0f;
    }
  }
  for (int i = 0; i < cfg.freq_masks; ++i) {
    const int width =
        std::min(std::uniform_int_distribution<int>(0, cfg.max_freq_width)(rng),
                 bins);
    const int start = std::uniform_int_distribution<int>(0, bins - width)(rng);
    for (int t = 0; t < frames; ++t) {
      for (int d = start; d < start + width; ++d) out.values(t, d) = 0.0f;
    }
  }
  return out;
}

LogMelSpec roll_frames(const LogMelSpec& spec, long shift) {
  const long frames = static_cast<long>(spec.frames());
  LogMelSpec out = spec;
  if (frames == 0) return out;
  const long s = ((shift % frames) + frames) % frames;
  if (s == 0) return out;
  for (long i = 0; i < frames; ++i) {
    const long src = (i - s + frames) % frames;
    std::copy(spec.values.row(src).begin(), spec.values.row(src).end(),
              out.values.row(i).begin());
  }
  return out;
}

long draw_time_shift(double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidInput("time_shift: sigma must be >= 0");
  if (sigma == 0.0) return 0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  return std::lround(normal(rng));
}

LogMelSpec time_shift(const LogMelSpec& spec, double sigma, std::uint64_t seed) {
  return roll_frames(spec, draw_time_shift(sigma, seed));
}

}  // namespace wsvad::dsp
