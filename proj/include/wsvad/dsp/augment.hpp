#pragma once

#include <cstdint>

#include "wsvad/dsp/logmel.hpp"

namespace wsvad::dsp {

struct SpecAugConfig {
  int time_masks = 2;
  int max_time_width = 60;
  int freq_masks = 2;
  int max_freq_width = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Zeroes random time and frequency stripes.
///
/// Draw order from mt19937_64(seed): for each time mask a width
/// U{0..max_time_width} (clamped to T) then a start U{0..T-width}; then the
/// same for each frequency mask over D. Masked cells become 0.0; every
/// other cell is copied unchanged.
LogMelSpec spec_augment(const LogMelSpec& spec, const SpecAugConfig& cfg);

/// Circular roll along time: output row i is input row (i - shift) mod T.
LogMelSpec roll_frames(const LogMelSpec& spec, long shift);

/// Draws shift = round(N(0, sigma)) from mt19937_64(seed).
long draw_time_shift(double sigma, std::uint64_t seed);

/// roll_frames(spec, draw_time_shift(sigma, seed)).
LogMelSpec time_shift(const LogMelSpec& spec, double sigma, std::uint64_t seed);

}  // namespace wsvad::dsp
