#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "wsvad/common/error.hpp"
#include "wsvad/dsp/audio.hpp"
#include "wsvad/dsp/augment.hpp"
#include "wsvad/dsp/feature_io.hpp"
#include "wsvad/dsp/logmel.hpp"
#include "wsvad/dsp/mix.hpp"
#include "wsvad/dsp/resample.hpp"

using namespace wsvad;
using namespace wsvad::dsp;

namespace {

AudioClip sine(double freq, int sr, double seconds, double amp = 0.5) {
  AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(static_cast<std::size_t>(std::lround(sr * seconds)));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] =
        static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * i / sr));
  }
  return c;
}

AudioClip noise(int sr, std::size_t n, std::uint64_t seed, double scale = 0.3) {
  AudioClip c;
  c.sample_rate = sr;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  c.samples.resize(n);
  for (auto& s : c.samples) s = static_cast<float>(std::clamp(g(rng), -1.0, 1.0));
  return c;
}

// Brute-force DFT magnitude at an integer frequency (Hz).
double dft_magnitude(const std::vector<float>& x, int sr, double freq) {
  double re = 0.0, im = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double ph = 2 * std::numbers::pi * freq * n / sr;
    re += x[n] * std::cos(ph);
    im -= x[n] * std::sin(ph);
  }
  return std::hypot(re, im);
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "wsvad_test_dsp";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Resample, SameRateIsBitwiseIdentity) {
  auto clip = noise(22050, 5000, 1);
  auto out = resample(clip, 22050);
  EXPECT_EQ(out.sample_rate, 22050);
  EXPECT_EQ(out.samples, clip.samples);
}

TEST(Resample, SinePeakSurvivesDownsampling) {
  auto out = resample(sine(1000.0, 44100, 1.0), 22050);
  ASSERT_EQ(out.sample_rate, 22050);
  ASSERT_EQ(out.samples.size(), 22050u);
  // 1 s at 22050 Hz gives 1 Hz DFT resolution; scan around the tone.
  double best = -1.0;
  int best_f = 0;
  for (int f = 900; f <= 1100; ++f) {
    const double m = dft_magnitude(out.samples, 22050, f);
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  EXPECT_LE(std::abs(best_f - 1000), 1);
}

TEST(Resample, ZerosStayZero) {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(100, 0.0f);
  auto out = resample(clip, 22050);
  EXPECT_EQ(out.samples.size(), 276u);  // ceil(100 * 22050 / 8000)
  for (float s : out.samples) EXPECT_EQ(s, 0.0f);
}

TEST(Resample, DurationPreservedWithinOneSample) {
  for (int sr : {8000, 16000, 32000, 44100, 48000}) {
    auto clip = noise(sr, static_cast<std::size_t>(sr) * 3 / 7 + 11, sr);
    auto out = resample(clip, 22050);
    EXPECT_NEAR(out.duration_s(), clip.duration_s(), 1.0 / 22050) << sr;
  }
}

TEST(Resample, Errors) {
  AudioClip empty;
  empty.sample_rate = 16000;
  EXPECT_THROW(resample(empty, 22050), InvalidInput);
  auto c = noise(16000, 10, 3);
  EXPECT_THROW(resample(c, 0), InvalidInput);
  c.sample_rate = 0;
  EXPECT_THROW(resample(c, 22050), InvalidInput);
}

TEST(LogMel, SilenceHitsTheFloor) {
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.assign(22050, 0.0f);
  DspConfig cfg;
  auto spec = logmel(clip, cfg);
  const float expected = static_cast<float>(std::log(cfg.log_floor));
  for (float v : spec.values.values()) EXPECT_EQ(v, expected);
}

TEST(LogMel, FrameCountIsCeilOfHops) {
  AudioClip clip = sine(440.0, 22050, 2.0);
  EXPECT_EQ(logmel(clip).frames(), 100u);
  EXPECT_EQ(logmel(clip).bins(), 64u);
  clip.samples.resize(44101);
  EXPECT_EQ(logmel(clip).frames(), 101u);
  clip.samples.resize(17);
  EXPECT_EQ(logmel(clip).frames(), 1u);
}

TEST(LogMel, SinePeaksAtNearestMelCentre) {
  auto spec = logmel(sine(1000.0, 22050, 1.0));
  std::vector<double> avg(spec.bins(), 0.0);
  for (std::size_t t = 0; t < spec.frames(); ++t) {
    for (std::size_t d = 0; d < spec.bins(); ++d) avg[d] += spec.values(t, d);
  }
  const auto argmax = std::distance(avg.begin(), std::max_element(avg.begin(), avg.end()));

  // Independent HTK centre frequencies: 66 points evenly spaced in mel
  // between 0 and mel(11025); filter m is centred on point m+1.
  const double mel_top = 2595.0 * std::log10(1.0 + 11025.0 / 700.0);
  int nearest = -1;
  double nearest_dist = 1e300;
  for (int m = 0; m < 64; ++m) {
    const double mel = mel_top * (m + 1) / 65.0;
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < nearest_dist) {
      nearest_dist = std::abs(hz - 1000.0);
      nearest = m;
    }
  }
  EXPECT_EQ(argmax, nearest);
}

TEST(LogMel, FilterbankCentresMatchHtk) {
  MelFilterbank bank(22050, 2048, 64);
  for (int m = 0; m < 64; m += 9) {
    const double mel = MelFilterbank::hz_to_mel(bank.center_hz(m));
    EXPECT_NEAR(mel, MelFilterbank::hz_to_mel(11025.0) * (m + 1) / 65.0, 1e-9);
  }
  EXPECT_NEAR(MelFilterbank::mel_to_hz(MelFilterbank::hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(LogMel, TranslationCovariance) {
  auto clip = noise(22050, 22050, 7);
  const int k = 5;
  AudioClip shifted = clip;
  shifted.samples.insert(shifted.samples.begin(), k * 441, 0.0f);
  auto a = logmel(clip);
  auto b = logmel(shifted);
  ASSERT_EQ(b.frames(), a.frames() + k);
  for (std::size_t t = 2; t + 2 < a.frames(); ++t) {
    for (std::size_t d = 0; d < a.bins(); ++d) {
      ASSERT_NEAR(a.values(t, d), b.values(t + k, d), 1e-9) << t << "," << d;
    }
  }
}

TEST(LogMel, DeterministicAndFinite) {
  auto clip = noise(22050, 10000, 9);
  auto a = logmel(clip);
  auto b = logmel(clip);
  EXPECT_EQ(a.values, b.values);
  for (float v : a.values.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LogMel, Errors) {
  auto clip = noise(16000, 1000, 3);
  EXPECT_THROW(logmel(clip), InvalidInput);
  clip.sample_rate = 22050;
  clip.samples.clear();
  EXPECT_THROW(logmel(clip), InvalidInput);
  DspConfig bad;
  bad.win_s = 0.2;  // 4410 samples > 2048
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = DspConfig{};
  bad.hop_s = 0.05;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(LogMel, ExtractFeaturesResamples) {
  auto spec = extract_features(sine(500.0, 16000, 1.0));
  EXPECT_EQ(spec.frames(), 50u);
}

namespace {

LogMelSpec filled(std::size_t frames, std::size_t bins, float v) {
  LogMelSpec s;
  s.values = Matrix<float>(frames, bins, v);
  return s;
}

LogMelSpec random_spec(std::size_t frames, std::size_t bins, std::uint64_t seed) {
  LogMelSpec s;
  s.values = Matrix<float>(frames, bins);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-5.0f, 5.0f);
  for (auto& v : s.values.values()) v = u(rng);
  return s;
}

// Replays the documented draw sequence and marks the union of masks.
std::vector<std::vector<bool>> replay_masks(int frames, int bins,
                                            const SpecAugConfig& cfg) {
  std::vector<std::vector<bool>> mask(frames, std::vector<bool>(bins, false));
  std::mt19937_64 rng(cfg.seed);
  for (int i = 0; i < cfg.time_masks; ++i) {
    int w = std::uniform_int_distribution<int>(0, cfg.max_time_width)(rng);
    w = std::min(w, frames);
    const int s = std::uniform_int_distribution<int>(0, frames - w)(rng);
    for (int t = s; t < s + w; ++t)
      for (int d = 0; d < bins; ++d) mask[t][d] = true;
  }
  for (int i = 0; i < cfg.freq_masks; ++i) {
    int w = std::uniform_int_distribution<int>(0, cfg.max_freq_width)(rng);
    w = std::min(w, bins);
    const int s = std::uniform_int_distribution<int>(0, bins - w)(rng);
    for (int t = 0; t < frames; ++t)
      for (int d = s; d < s + w; ++d) mask[t][d] = true;
  }
  return mask;
}

}  // namespace

TEST(SpecAugment, NoMasksIsIdentity) {
  auto spec = random_spec(50, 64, 1);
  SpecAugConfig cfg;
  cfg.time_masks = 0;
  cfg.freq_masks = 0;
  EXPECT_EQ(spec_augment(spec, cfg).values, spec.values);
}

TEST(SpecAugment, ZeroWidthsIsIdentity) {
  auto spec = random_spec(50, 64, 2);
  SpecAugConfig cfg;
  cfg.time_masks = 5;
  cfg.freq_masks = 7;
  cfg.max_time_width = 0;
  cfg.max_freq_width = 0;
  EXPECT_EQ(spec_augment(spec, cfg).values, spec.values);
}

TEST(SpecAugment, ZeroedCellsAreExactlyTheReplayedMaskUnion) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SpecAugConfig cfg;
    cfg.seed = seed;
    auto out = spec_augment(filled(100, 64, 1.0f), cfg);
    auto mask = replay_masks(100, 64, cfg);
    std::size_t zeroed = 0, expected = 0;
    for (int t = 0; t < 100; ++t) {
      for (int d = 0; d < 64; ++d) {
        zeroed += out.values(t, d) == 0.0f;
        expected += mask[t][d];
        ASSERT_EQ(out.values(t, d), mask[t][d] ? 0.0f : 1.0f);
      }
    }
    EXPECT_EQ(zeroed, expected);
  }
}

TEST(SpecAugment, UnmaskedCellsUnchanged) {
  auto spec = random_spec(80, 64, 5);
  SpecAugConfig cfg;
  cfg.seed = 42;
  auto out = spec_augment(spec, cfg);
  auto mask = replay_masks(80, 64, cfg);
  for (int t = 0; t < 80; ++t) {
    for (int d = 0; d < 64; ++d) {
      if (!mask[t][d]) {
        ASSERT_EQ(out.values(t, d), spec.values(t, d));
      }
    }
  }
}

TEST(SpecAugment, WidthsClampToAxis) {
  SpecAugConfig cfg;
  cfg.max_time_width = 1000;
  cfg.max_freq_width = 1000;
  cfg.seed = 3;
  auto out = spec_augment(filled(5, 4, 1.0f), cfg);
  auto mask = replay_masks(5, 4, cfg);
  for (int t = 0; t < 5; ++t)
    for (int d = 0; d < 4; ++d) EXPECT_EQ(out.values(t, d), mask[t][d] ? 0.0f : 1.0f);
}

TEST(SpecAugment, NegativeCountRejected) {
  SpecAugConfig cfg;
  cfg.time_masks = -1;
  EXPECT_THROW(spec_augment(filled(5, 4, 1.0f), cfg), InvalidInput);
}

TEST(TimeShift, ZeroSigmaIsIdentity) {
  auto spec = random_spec(30, 8, 1);
  EXPECT_EQ(time_shift(spec, 0.0, 123).values, spec.values);
}

TEST(TimeShift, RollByThree) {
  auto spec = random_spec(10, 4, 2);
  auto out = roll_frames(spec, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t d = 0; d < 4; ++d) {
      EXPECT_EQ(out.values(i, d), spec.values((i + 10 - 3) % 10, d));
    }
  }
}

TEST(TimeShift, InverseShiftRestores) {
  auto spec = random_spec(37, 8, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const long eta = draw_time_shift(10.0, seed);
    EXPECT_EQ(roll_frames(roll_frames(spec, eta), -eta).values, spec.values);
    EXPECT_EQ(time_shift(spec, 10.0, seed).values, roll_frames(spec, eta).values);
  }
}

TEST(TimeShift, NegativeSigmaRejected) {
  EXPECT_THROW(draw_time_shift(-1.0, 0), InvalidInput);
}

TEST(Mix, EqualPowerAtZeroDbHasUnitGain) {
  auto s = noise(22050, 4000, 1, 0.2);
  auto n = s;
  MixSpec spec;
  spec.snr_db = 0.0;
  auto r = mix_components(s, n, spec);
  EXPECT_NEAR(r.gain, 1.0, 1e-12);
}

TEST(Mix, PowerRatioTenAtTenDbHasUnitGain) {
  auto s = noise(22050, 4000, 1, 0.2);
  AudioClip n = s;
  for (auto& v : n.samples) v = static_cast<float>(v / std::sqrt(10.0));
  MixSpec spec;
  spec.snr_db = 10.0;
  auto r = mix_components(s, n, spec);
  // Float storage of the scaled noise perturbs the power ratio slightly.
  EXPECT_NEAR(r.gain, 1.0, 1e-6);
}

TEST(Mix, HighSnrLeavesSpeechAlone) {
  auto s = sine(300.0, 22050, 1.0, 0.3);
  AudioClip n;
  n.sample_rate = 22050;
  n.samples.resize(5000);
  for (std::size_t i = 0; i < n.samples.size(); ++i) n.samples[i] = (i % 2) ? 1.0f : -1.0f;
  MixSpec spec;
  spec.snr_db = 60.0;
  auto out = mix_at_snr(s, n, spec);
  double acc = 0.0;
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const double d = out.samples[i] - s.samples[i];
    acc += d * d;
  }
  EXPECT_LT(std::sqrt(acc / s.samples.size()), 1e-3);
}

TEST(Mix, MeasuredSnrMatchesTarget) {
  for (int snr = -5; snr <= 20; ++snr) {
    auto s = noise(22050, 7000, 10 + snr, 0.1);
    auto n = noise(22050, 3000, 100 + snr, 0.4);
    MixSpec spec;
    spec.snr_db = snr;
    spec.seed = static_cast<std::uint64_t>(snr + 50);
    auto r = mix_components(s, n, spec);
    EXPECT_NEAR(measure_snr_db(r.speech, r.noise), snr, 0.01);
    double peak = 0.0;
    for (float v : r.mixture.samples) peak = std::max(peak, std::abs(double(v)));
    EXPECT_LE(peak, 1.0);
  }
}

TEST(Mix, NoiseLoopsAndIsDeterministic) {
  auto s = noise(22050, 1000, 1, 0.1);
  auto n = noise(22050, 7, 2, 0.5);
  MixSpec spec;
  spec.seed = 77;
  auto a = mix_components(s, n, spec);
  auto b = mix_components(s, n, spec);
  EXPECT_EQ(a.mixture.samples, b.mixture.samples);
  ASSERT_EQ(a.noise.size(), 1000u);
  for (std::size_t i = 7; i < 1000; ++i) EXPECT_DOUBLE_EQ(a.noise[i], a.noise[i - 7]);
}

TEST(Mix, Errors) {
  auto s = noise(22050, 100, 1);
  AudioClip silent;
  silent.sample_rate = 22050;
  silent.samples.assign(50, 0.0f);
  MixSpec spec;
  EXPECT_THROW(mix_at_snr(s, silent, spec), InvalidInput);
  auto other = noise(16000, 100, 2);
  EXPECT_THROW(mix_at_snr(s, other, spec), InvalidInput);
  spec.snr_db = std::numeric_limits<double>::infinity();
  EXPECT_THROW(mix_at_snr(s, s, spec), InvalidInput);
}

TEST(WavIo, RoundTripWithinQuantization) {
  auto clip = sine(440.0, 16000, 0.25, 0.7);
  auto path = temp_path("sine.wav");
  write_wav(path, clip);
  auto back = read_wav(path, "x");
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(back.id, "x");
  ASSERT_EQ(back.samples.size(), clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    EXPECT_NEAR(back.samples[i], clip.samples[i], 1.0 / 32767);
  }
}

TEST(WavIo, StereoIsAveraged) {
  // Hand-built 2-frame stereo file: (16384, -16384), (8192, 8192).
  std::string b = "RIFF";
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xff)); };
  auto u16 = [&](std::uint16_t v) { b.push_back(char(v & 0xff)); b.push_back(char(v >> 8)); };
  u32(36 + 8);
  b += "WAVEfmt ";
  u32(16); u16(1); u16(2); u32(8000); u32(8000 * 4); u16(4); u16(16);
  b += "data";
  u32(8);
  u16(16384); u16(static_cast<std::uint16_t>(-16384)); u16(8192); u16(8192);
  auto path = temp_path("stereo.wav");
  { std::ofstream(path, std::ios::binary) << b; }
  auto clip = read_wav(path);
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_FLOAT_EQ(clip.samples[0], 0.0f);
  EXPECT_FLOAT_EQ(clip.samples[1], 0.25f);
}

TEST(WavIo, RejectsGarbage) {
  auto path = temp_path("garbage.wav");
  { std::ofstream(path, std::ios::binary) << "not a wav file at all"; }
  EXPECT_THROW(read_wav(path), FormatError);
}

TEST(FeatureIo, HeaderAndRoundTrip) {
  auto spec = random_spec(7, 64, 11);
  auto path = temp_path("feat.lms");
  write_features(path, spec);
  EXPECT_EQ(std::filesystem::file_size(path), 16u + 7 * 64 * 4);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "LMS0");
  auto back = read_features(path);
  EXPECT_EQ(back.values, spec.values);
}
