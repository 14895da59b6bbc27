#include "wsvad/dsp/mix.hpp"

#include <cmath>
#include <random>

#include "wsvad/common/error.hpp"

namespace wsvad::dsp {

namespace {

double power_of(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

}  // namespace

MixResult mix_components(const AudioClip& speech, const AudioClip& noise,
                         const MixSpec& spec) {
  if (!std::isfinite(spec.snr_db)) throw InvalidInput("mix: snr_db must be finite");
  if (speech.sample_rate != noise.sample_rate) {
    throw InvalidInput("mix: sample rates differ");
  }
  if (speech.samples.empty() || noise.samples.empty()) {
    throw InvalidInput("mix: empty clip");
  }

  MixResult r;
  const std::size_t n = speech.samples.size();
  r.speech.assign(speech.samples.begin(), speech.samples.end());
  const double ps = power_of(r.speech);
  if (!(ps > 0.0)) throw InvalidInput("mix: speech has zero power");

  std::mt19937_64 rng(spec.seed);
  const std::size_t m = noise.samples.size();
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
  r.noise.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.noise[i] = noise.samples[(offset + i) % m];
  const double pn = power_of(r.noise);
  if (!(pn > 0.0)) throw InvalidInput("mix: noise has zero power");

  r.gain = std::sqrt(ps / (pn * std::pow(10.0, spec.snr_db / 10.0)));
  for (double& v : r.noise) v *= r.gain;

  std::vector<double> sum(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum[i] = r.speech[i] + r.noise[i];
    peak = std::max(peak, std::abs(sum[i]));
  }
  r.peak_scale = peak > 1.0 ? 1.0 / peak : 1.0;

  r.mixture.sample_rate = speech.sample_rate;
  r.mixture.id = speech.id;
  r.mixture.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.mixture.samples[i] = static_cast<float>(sum[i] * r.peak_scale);
  }
  return r;
}

AudioClip mix_at_snr(const AudioClip& speech, const AudioClip& noise,
                     const MixSpec& spec) {
  return mix_components(speech, noise, spec).mixture;
}

double measure_snr_db(const std::vector<double>& speech,
                      const std::vector<double>& noise) {
  return 10.0 * std::log10(power_of(speech) / power_of(noise));
}

}  // namespace wsvad::dsp
