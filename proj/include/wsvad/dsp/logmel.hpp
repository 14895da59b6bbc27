#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsvad/common/matrix.hpp"
#include "wsvad/dsp/audio.hpp"

namespace wsvad::dsp {

/// Front-end parameters. Defaults give 64 log-Mel bins every 20 ms from a
/// 40 ms Hann window and a 2048-point transform at 22050 Hz.
struct DspConfig {
  int target_sr = 22050;
  int n_fft = 2048;
  double win_s = 0.040;
  double hop_s = 0.020;
  int n_mels = 64;
  double log_floor = 1e-10;

  int win_samples() const;
  int hop_samples() const;
  /// Throws InvalidInput when the window does not fit the transform or the
  /// hop exceeds the window.
  void validate() const;
};

/// T x D log-Mel power spectrogram (natural log).
struct LogMelSpec {
  Matrix<float> values;
  double frame_hop_s = 0.020;
  std::string clip_id;

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t bins() const noexcept { return values.cols(); }
};

/// Triangular filters on the HTK mel scale (mel = 2595 log10(1 + f/700)),
/// spanning 0 Hz to Nyquist, peak weight 1 (area-unnormalized).
class MelFilterbank {
 public:
  MelFilterbank(int sample_rate, int n_fft, int n_mels);

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

  int n_mels() const noexcept { return n_mels_; }
  int n_bins() const noexcept { return n_bins_; }
  double center_hz(int m) const { return edges_hz_[static_cast<std::size_t>(m) + 1]; }
  double weight(int m, int k) const {
    return weights_[static_cast<std::size_t>(m) * n_bins_ + k];
  }

  /// power has n_fft/2+1 entries; out receives n_mels entries.
  void apply(const double* power, double* out) const;

 private:
  int n_mels_;
  int n_bins_;
  std::vector<double> edges_hz_;
  std::vector<double> weights_;
  // Nonzero support per filter, [first_, last_).
  std::vector<int> first_;
  std::vector<int> last_;
};

/// Computes the log-Mel spectrogram of a clip already at cfg.target_sr.
///
/// Frame t analyses a Hann window of win_samples centred on the middle of
/// the hop interval [t*hop, (t+1)*hop); samples outside the clip read as
/// zero. T = ceil(n / hop), so a clip shorter than one hop yields a single
/// frame.
LogMelSpec logmel(const AudioClip& clip, const DspConfig& cfg = {});

/// resample() followed by logmel().
LogMelSpec extract_features(const AudioClip& clip, const DspConfig& cfg = {});

}  // namespace wsvad::dsp
