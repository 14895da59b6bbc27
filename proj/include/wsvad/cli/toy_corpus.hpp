#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wsvad/cli/manifest.hpp"
#include "wsvad/dsp/audio.hpp"
#include "wsvad/eval/postprocess.hpp"

namespace wsvad::cli {

inline const std::string kToySpeech = "Speech";
inline const std::string kToyNoise = "Noise";
inline const std::string kToyTone = "Tone";

/// Parameters of a synthetic corpus. Event counts per clip and kind are
/// Poisson with the given means; each event lasts a whole number of 20 ms
/// frames drawn uniformly from [min_event_s, max_event_s] and starts on a
/// frame boundary drawn uniformly among positions that keep it inside the
/// clip.
struct ToyCorpusSpec {
  std::size_t n_clips = 20;
  double clip_dur_s = 10.0;
  double speech_event_rate = 2.0;
  double noise_event_rate = 1.0;
  double tone_event_rate = 1.0;
  double min_event_s = 0.5;
  double max_event_s = 2.5;
  int sample_rate = 22050;
  std::uint64_t seed = 0;
  std::string id_prefix = "toy";

  void validate() const;
  std::size_t clip_frames() const;
  std::size_t min_event_frames() const;
  std::size_t max_event_frames() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ToyCorpusSpec from_json(const nlohmann::json& j);
};

struct ToyEvent {
  std::string kind;
  std::size_t onset_frame = 0;
  std::size_t frames = 0;
};

struct ToyClip {
  dsp::AudioClip audio;
  std::vector<ToyEvent> events;
  /// Union of the speech events, in seconds.
  std::vector<eval::Segment> speech;
  std::vector<std::string> labels;
};

/// Clip `index` of the corpus. Depends only on (spec, index).
///
/// The waveform is a white noise floor plus every scheduled event. Speech
/// events are harmonic stacks (f0 in [120, 300] Hz, 4 to 10 partials with
/// 1/k amplitudes) under a 4 Hz amplitude modulation; noise events are
/// low-passed white noise; tone events are a single sinusoid in
/// [400, 3000] Hz.
ToyClip synthesize_toy_clip(const ToyCorpusSpec& spec, std::size_t index);

struct ToyCorpus {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path reference_path;
  std::vector<eval::SegmentList> reference;
};

/// Writes audio/<id>.wav (PCM-16), reference.tsv (speech segments of every
/// clip), manifest.tsv and toy_spec.json under `out_dir`.
ToyCorpus write_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir,
                           std::size_t threads = 1);

}  // namespace wsvad::cli
