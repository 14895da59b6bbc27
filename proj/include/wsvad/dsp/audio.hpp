#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wsvad::dsp {

/// Mono waveform. Amplitudes are nominally in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string id;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate
                           : 0.0;
  }
};

/// Reads a RIFF/WAVE PCM-16 file. Stereo input is averaged to mono.
AudioClip read_wav(const std::filesystem::path& path, std::string id = {});

/// Writes a mono PCM-16 WAV; samples are scaled by 32768, rounded, and
/// saturated to the int16 range.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Mean squared amplitude.
double mean_power(const std::vector<float>& samples);

}  // namespace wsvad::dsp
