#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsvad/dsp/audio.hpp"

namespace wsvad::dsp {

struct MixSpec {
  std::string speech_clip_id;
  std::string noise_clip_id;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

/// Everything produced while mixing, including the two components as they
/// were summed (before any peak normalization).
struct MixResult {
  AudioClip mixture;
  std::vector<double> speech;  // speech component
  std::vector<double> noise;   // gain-scaled, looped/truncated noise
  double gain = 1.0;           // applied to the noise
  double peak_scale = 1.0;     // applied to the sum to avoid clipping
};

/// Adds noise to speech at a target SNR.
///
/// The noise is read circularly from a seeded random start offset until it
/// covers the speech length, scaled by g = sqrt(Ps / (Pn * 10^(snr/10))),
/// with P the mean squared amplitude over the full clip, and summed. If the
/// sum would clip it is scaled down so its peak is 1.
MixResult mix_components(const AudioClip& speech, const AudioClip& noise,
                         const MixSpec& spec);

AudioClip mix_at_snr(const AudioClip& speech, const AudioClip& noise,
                     const MixSpec& spec);

/// 10 log10(P(speech) / P(noise)).
double measure_snr_db(const std::vector<double>& speech,
                      const std::vector<double>& noise);

}  // namespace wsvad::dsp
