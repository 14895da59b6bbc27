#include "wsvad/cli/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "wsvad/common/binary_io.hpp"
#include "wsvad/common/error.hpp"
#include "wsvad/common/parallel.hpp"
#include "wsvad/common/rng.hpp"
#include "wsvad/eval/label_io.hpp"

namespace wsvad::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kFrameS = 0.020;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kRampS = 0.010;

std::size_t to_frames(double s) { return static_cast<std::size_t>(std::llround(s / kFrameS)); }

std::size_t frame_sample(std::size_t frame, int sr) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(frame) * kFrameS * sr));
}

// Raised-cosine fade in and out over kRampS at each end of an event.
double edge_gain(std::size_t i, std::size_t n, int sr) {
  const double ramp = kRampS * sr;
  const double k = static_cast<double>(std::min(i, n - 1 - i));
  if (k >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * k / ramp);
}

void add_speech(std::vector<double>& out, std::size_t begin, std::size_t end, int sr, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = 120.0 + 180.0 * u(rng);
  const int partials = std::uniform_int_distribution<int>(4, 10)(rng);
  const double level = 0.04 + 0.08 * u(rng);
  const double am_phase = kTwoPi * u(rng);
  std::vector<double> amp(partials), phase(partials);
  for (int k = 0; k < partials; ++k) {
    amp[k] = level / (k + 1) * (0.7 + 0.6 * u(rng));
    phase[k] = kTwoPi * u(rng);
  }
  const double nyquist = 0.5 * sr;
  const std::size_t n = end - begin;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int k = 0; k < partials; ++k) {
      const double f = f0 * (k + 1);
      if (f >= nyquist) break;
      v += amp[k] * std::sin(kTwoPi * f * t + phase[k]);
    }
    const double am = 0.55 + 0.45 * std::sin(kTwoPi * 4.0 * t + am_phase);
    out[begin + i] += v * am * edge_gain(i, n, sr);
  }
}

void add_noise_burst(std::vector<double>& out, std::size_t begin, std::size_t end, int sr,
                     Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double level = 0.03 + 0.09 * u(rng);
  const double cutoff = 1000.0 + 5000.0 * u(rng);
  const double a = std::exp(-kTwoPi * cutoff / sr);
  // One-pole low-pass; the gain keeps the output variance near level^2.
  const double norm = level * std::sqrt((1.0 + a) / (1.0 - a)) * (1.0 - a);
  double y = 0.0;
  const std::size_t n = end - begin;
  for (std::size_t i = 0; i < n; ++i) {
    y = a * y + g(rng);
    out[begin + i] += norm * y * edge_gain(i, n, sr);
  }
}

void add_tone(std::vector<double>& out, std::size_t begin, std::size_t end, int sr, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f = 400.0 + 2600.0 * u(rng);
  const double level = 0.03 + 0.09 * u(rng);
  const double phase = kTwoPi * u(rng);
  const std::size_t n = end - begin;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    out[begin + i] += level * std::sqrt(2.0) * std::sin(kTwoPi * f * t + phase) * edge_gain(i, n, sr);
  }
}

}  // namespace

void ToyCorpusSpec::validate() const {
  if (n_clips < 1) throw InvalidInput("toy corpus: n_clips must be at least 1");
  if (!(clip_dur_s >= kFrameS) || clip_dur_s > 10.0) {
    throw InvalidInput("toy corpus: clip_dur_s must lie in [0.02, 10]");
  }
  for (double r : {speech_event_rate, noise_event_rate, tone_event_rate}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidInput("toy corpus: event rates must be >= 0");
  }
  if (!(min_event_s >= kFrameS) || !(max_event_s >= min_event_s) || max_event_s > clip_dur_s) {
    throw InvalidInput("toy corpus: need 0.02 <= min_event_s <= max_event_s <= clip_dur_s");
  }
  if (sample_rate < 8000 || sample_rate % 50 != 0) {
    throw InvalidInput("toy corpus: sample_rate must be >= 8000 and a multiple of 50");
  }
  if (id_prefix.find_first_of("\t\n/\\") != std::string::npos) {
    throw InvalidInput("toy corpus: id_prefix may not contain separators");
  }
}

std::size_t ToyCorpusSpec::clip_frames() const { return to_frames(clip_dur_s); }
std::size_t ToyCorpusSpec::min_event_frames() const { return to_frames(min_event_s); }
std::size_t ToyCorpusSpec::max_event_frames() const { return to_frames(max_event_s); }

nlohmann::json ToyCorpusSpec::to_json() const {
  return {{"n_clips", n_clips},
          {"clip_dur_s", clip_dur_s},
          {"speech_event_rate", speech_event_rate},
          {"noise_event_rate", noise_event_rate},
          {"tone_event_rate", tone_event_rate},
          {"min_event_s", min_event_s},
          {"max_event_s", max_event_s},
          {"sample_rate", sample_rate},
          {"seed", seed},
          {"id_prefix", id_prefix}};
}

ToyCorpusSpec ToyCorpusSpec::from_json(const nlohmann::json& j) {
  ToyCorpusSpec s;
  const auto known = s.to_json();
  try {
    for (const auto& [key, _] : j.items()) {
      if (!known.contains(key)) throw InvalidInput("toy corpus: unknown key '" + key + "'");
    }
    s.n_clips = j.value("n_clips", s.n_clips);
    s.clip_dur_s = j.value("clip_dur_s", s.clip_dur_s);
    s.speech_event_rate = j.value("speech_event_rate", s.speech_event_rate);
    s.noise_event_rate = j.value("noise_event_rate", s.noise_event_rate);
    s.tone_event_rate = j.value("tone_event_rate", s.tone_event_rate);
    s.min_event_s = j.value("min_event_s", s.min_event_s);
    s.max_event_s = j.value("max_event_s", s.max_event_s);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.seed = j.value("seed", s.seed);
    s.id_prefix = j.value("id_prefix", s.id_prefix);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("toy corpus: ") + e.what());
  }
  s.validate();
  return s;
}

ToyClip synthesize_toy_clip(const ToyCorpusSpec& spec, std::size_t index) {
  spec.validate();
  const std::size_t n_frames = spec.clip_frames();
  const std::size_t d_min = spec.min_event_frames();
  const std::size_t d_max = std::min(spec.max_event_frames(), n_frames);
  const int sr = spec.sample_rate;

  ToyClip clip;
  char digits[16];
  std::snprintf(digits, sizeof digits, "%05zu", index);
  clip.audio.id = spec.id_prefix + "_" + digits;
  clip.audio.sample_rate = sr;

  auto sched = make_rng(spec.seed, "toy-schedule", index);
  const std::pair<const std::string*, double> kinds[] = {{&kToySpeech, spec.speech_event_rate},
                                                         {&kToyNoise, spec.noise_event_rate},
                                                         {&kToyTone, spec.tone_event_rate}};
  for (const auto& [kind, rate] : kinds) {
    const int count = rate > 0 ? std::poisson_distribution<int>(rate)(sched) : 0;
    for (int e = 0; e < count; ++e) {
      const std::size_t d = std::uniform_int_distribution<std::size_t>(d_min, d_max)(sched);
      const std::size_t on = std::uniform_int_distribution<std::size_t>(0, n_frames - d)(sched);
      clip.events.push_back({*kind, on, d});
    }
  }

  const std::size_t n_samples = frame_sample(n_frames, sr);
  std::vector<double> wave(n_samples, 0.0);
  auto sig = make_rng(spec.seed, "toy-signal", index);
  {
    const double floor_rms = 0.002 + 0.006 * std::uniform_real_distribution<double>(0, 1)(sig);
    std::normal_distribution<double> g(0.0, floor_rms);
    for (auto& v : wave) v = g(sig);
  }
  for (const auto& ev : clip.events) {
    const std::size_t b = frame_sample(ev.onset_frame, sr);
    const std::size_t e = frame_sample(ev.onset_frame + ev.frames, sr);
    if (ev.kind == kToySpeech) add_speech(wave, b, e, sr, sig);
    else if (ev.kind == kToyNoise) add_noise_burst(wave, b, e, sr, sig);
    else add_tone(wave, b, e, sr, sig);
  }
  double peak = 0.0;
  for (double v : wave) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0.95 ? 0.95 / peak : 1.0;
  clip.audio.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    clip.audio.samples[i] = static_cast<float>(wave[i] * scale);
  }

  std::vector<std::uint8_t> speech(n_frames, 0);
  std::vector<std::string> labels;
  for (const auto& ev : clip.events) {
    labels.push_back(ev.kind);
    if (ev.kind != kToySpeech) continue;
    std::fill_n(speech.begin() + static_cast<std::ptrdiff_t>(ev.onset_frame), ev.frames, 1);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  clip.labels = std::move(labels);
  clip.speech = eval::decode_segments(speech, kFrameS);
  return clip;
}

ToyCorpus write_toy_corpus(const ToyCorpusSpec& spec, const fs::path& out_dir,
                           std::size_t threads) {
  spec.validate();
  const auto audio_dir = out_dir / "audio";
  std::error_code ec;
  fs::create_directories(audio_dir, ec);
  if (ec) throw Error("cannot create " + audio_dir.string() + ": " + ec.message());

  ToyCorpus corpus;
  corpus.manifest_path = out_dir / "manifest.tsv";
  corpus.reference_path = out_dir / "reference.tsv";
  corpus.manifest.rows.resize(spec.n_clips);
  corpus.reference.resize(spec.n_clips);
  parallel_for(spec.n_clips, threads, [&](std::size_t i) {
    auto clip = synthesize_toy_clip(spec, i);
    const auto wav = audio_dir / (clip.audio.id + ".wav");
    dsp::write_wav(wav, clip.audio);
    corpus.manifest.rows[i] = {clip.audio.id, wav, clip.labels, corpus.reference_path};
    corpus.reference[i] = {clip.audio.id, std::move(clip.speech)};
  });
  eval::write_segments(corpus.reference_path, corpus.reference);
  write_manifest(corpus.manifest_path, corpus.manifest);
  io::write_file_atomic(out_dir / "toy_spec.json", spec.to_json().dump(2) + "\n");
  return corpus;
}

}  // namespace wsvad::cli
