#pragma once

#include "wsvad/dsp/audio.hpp"

namespace wsvad::dsp {

/// Band-limited sample-rate conversion (Kaiser-windowed sinc, polyphase).
///
/// The anti-aliasing cutoff sits at the lower of the two Nyquist
/// frequencies. Output length is ceil(n * target_sr / sample_rate). When
/// the rates already match the samples are returned unchanged.
AudioClip resample(const AudioClip& clip, int target_sr);

}  // namespace wsvad::dsp
