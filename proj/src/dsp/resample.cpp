#include "wsvad/dsp/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "wsvad/common/error.hpp"

namespace wsvad::dsp {

namespace {

constexpr double kZeroCrossings = 32.0;
constexpr double kKaiserBeta = 9.0;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double x, double half_width) {
  const double r = x / half_width;
  if (std::abs(r) >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_sr) {
  if (clip.sample_rate <= 0 || target_sr <= 0) {
    throw InvalidInput("resample: sample rates must be positive");
  }
  if (clip.samples.empty()) throw InvalidInput("resample: empty clip");
  if (clip.sample_rate == target_sr) return clip;

  const long g = std::gcd(static_cast<long>(clip.sample_rate),
                          static_cast<long>(target_sr));
  const long up = target_sr / g;     // output samples per period
  const long down = clip.sample_rate / g;  // input samples per period
  const double cutoff = std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / cutoff;
  const long taps_each_side = static_cast<long>(std::ceil(half_width));
  const long taps = 2 * taps_each_side;

  // table[p * taps + j] weights input sample (i0 - taps_each_side + 1 + j)
  // for an output whose position is i0 + p / up.
  std::vector<double> table(static_cast<std::size_t>(up * taps));
  for (long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / up;
    double sum = 0.0;
    for (long j = 0; j < taps; ++j) {
      const double x = frac + static_cast<double>(taps_each_side - 1 - j);
      const double w = cutoff * sinc(cutoff * x) * kaiser(x, half_width);
      table[p * taps + j] = w;
      sum += w;
    }
    for (long j = 0; j < taps; ++j) table[p * taps + j] /= sum;
  }

  const long n_in = static_cast<long>(clip.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  AudioClip out;
  out.sample_rate = target_sr;
  out.id = clip.id;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long pos = n * down;
    const long i0 = pos / up;
    const long p = pos % up;
    const double* w = &table[p * taps];
    const long first = i0 - taps_each_side + 1;
    double acc = 0.0;
    for (long j = 0; j < taps; ++j) {
      const long k = first + j;
      if (k < 0 || k >= n_in) continue;
      acc += w[j] * clip.samples[static_cast<std::size_t>(k)];
    }
    out.samples[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace wsvad::dsp
