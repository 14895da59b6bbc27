#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "wsvad/distill/archive.hpp"
#include "wsvad/distill/corpus.hpp"
#include "wsvad/distill/labels.hpp"
#include "wsvad/dsp/audio.hpp"

using namespace wsvad;
using namespace wsvad::distill;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "wsvad_test_distill" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Matrix<float> random_probs(std::size_t frames, std::size_t events, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Matrix<float> m(frames, events);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

StudentTargets soft_with_active(std::size_t frames, std::size_t active, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> hi(0.5f, 0.99f), lo(0.01f, 0.49f);
  StudentTargets s;
  s.clip_id = "clip" + std::to_string(seed);
  s.values = Matrix<float>(frames, 2);
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t t = order[i];
    s.values(t, 0) = i < active ? hi(rng) : lo(rng);
    s.values(t, 1) = std::uniform_real_distribution<float>(0.01f, 0.99f)(rng);
  }
  return s;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool rows_equal_bitwise(const Matrix<float>& a, const Matrix<float>& b, std::size_t t) {
  return same_bits(a(t, 0), b(t, 0)) && same_bits(a(t, 1), b(t, 1));
}

nn::CrnnConfig teacher_config() {
  nn::CrnnConfig cfg;
  cfg.n_mels = 16;
  cfg.blocks = {{{4}, 2, 4}, {{4}, 2, 4}};
  cfg.gru_hidden = 4;
  cfg.num_outputs = 3;
  cfg.output_labels = {"Speech", "Music", "Noise"};
  return cfg;
}

dsp::DspConfig small_dsp() {
  dsp::DspConfig d;
  d.target_sr = 8000;
  d.n_fft = 512;
  d.n_mels = 16;
  return d;
}

void write_tone(const std::filesystem::path& path, double seconds, double freq, int sr = 8000) {
  dsp::AudioClip c;
  c.sample_rate = sr;
  c.samples.resize(static_cast<std::size_t>(seconds * sr));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = static_cast<float>(0.3 * std::sin(2 * M_PI * freq * i / sr));
  }
  dsp::write_wav(path, c);
}

}  // namespace

// ---------------------------------------------------------------- pooling

TEST(PoolTeacherLabels, ThreeEventExample) {
  Matrix<float> p(1, 3, std::vector<float>{0.9f, 0.2f, 0.7f});
  const auto s = pool_teacher_labels(p, {});
  EXPECT_FLOAT_EQ(s.values(0, 0), 0.9f);
  EXPECT_FLOAT_EQ(s.values(0, 1), 0.7f);
  EXPECT_EQ(s.scheme, LabelScheme::kSoft);
}

TEST(PoolTeacherLabels, AllZero) {
  const auto s = pool_teacher_labels(Matrix<float>(7, 4), {});
  for (float v : s.values.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(s.frames(), 7u);
}

TEST(PoolTeacherLabels, MatchesLoopOracleOnAudiosetSizedOutput) {
  const auto p = random_probs(50, 527, 4);
  DistillConfig cfg;
  cfg.speech_index = 137;
  const auto s = pool_teacher_labels(p, cfg, "x");
  for (std::size_t t = 0; t < 50; ++t) {
    float best = -1.0f;
    for (std::size_t e = 0; e < 527; ++e) {
      if (e != 137 && p(t, e) > best) best = p(t, e);
    }
    EXPECT_EQ(s.values(t, 0), p(t, 137));
    EXPECT_EQ(s.values(t, 1), best);
  }
  EXPECT_EQ(s.clip_id, "x");
}

TEST(PoolTeacherLabels, InvariantToNonSpeechPermutation) {
  const auto p = random_probs(30, 6, 9);
  Matrix<float> q = p;
  const std::vector<std::size_t> perm{0, 4, 2, 5, 1, 3};
  for (std::size_t t = 0; t < 30; ++t) {
    for (std::size_t e = 0; e < 6; ++e) q(t, e) = p(t, perm[e]);
  }
  EXPECT_EQ(pool_teacher_labels(p, {}).values.values(), pool_teacher_labels(q, {}).values.values());
}

TEST(PoolTeacherLabels, ColumnsNeedNotSumToOne) {
  Matrix<float> p(2, 3, std::vector<float>{0.9f, 0.8f, 0.1f, 0.2f, 0.1f, 0.3f});
  const auto s = pool_teacher_labels(p, {});
  EXPECT_GT(s.values(0, 0) + s.values(0, 1), 1.0f);
}

TEST(PoolTeacherLabels, NeverExceedsFrameMaximum) {
  const auto p = random_probs(40, 10, 12);
  const auto s = pool_teacher_labels(p, {});
  for (std::size_t t = 0; t < 40; ++t) {
    const auto row = p.row(t);
    const float mx = *std::max_element(row.begin(), row.end());
    EXPECT_LE(s.values(t, 0), mx);
    EXPECT_LE(s.values(t, 1), mx);
  }
}

TEST(PoolTeacherLabels, Errors) {
  EXPECT_THROW(pool_teacher_labels(Matrix<float>(3, 1), {}), InvalidInput);
  DistillConfig cfg;
  cfg.speech_index = 3;
  EXPECT_THROW(pool_teacher_labels(Matrix<float>(3, 3), cfg), InvalidInput);
}

// ---------------------------------------------------------------- harden

TEST(Harden, BoundaryIsInclusive) {
  StudentTargets s;
  s.values = Matrix<float>(1, 2, std::vector<float>{0.5f, 0.49f});
  const auto h = harden(s, 0.5);
  EXPECT_EQ(h.values(0, 0), 1.0f);
  EXPECT_EQ(h.values(0, 1), 0.0f);
  EXPECT_EQ(h.scheme, LabelScheme::kHard);
}

TEST(Harden, ZeroStaysZeroAndIsIdempotent) {
  StudentTargets z;
  z.values = Matrix<float>(5, 2);
  const auto hz = harden(z);
  for (float v : hz.values.values()) EXPECT_EQ(v, 0.0f);
  const auto s = soft_with_active(60, 20, 3);
  const auto h = harden(s);
  EXPECT_EQ(harden(h).values.values(), h.values.values());
  for (float v : h.values.values()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

// ---------------------------------------------------------------- dynamize

TEST(Dynamize, ZeroFractionIsBitwiseSoft) {
  const auto s = soft_with_active(80, 30, 1);
  DistillConfig cfg;
  cfg.dynamic_fraction = 0.0;
  const auto d = dynamize(s, cfg);
  for (std::size_t t = 0; t < 80; ++t) EXPECT_TRUE(rows_equal_bitwise(d.values, s.values, t));
  EXPECT_EQ(d.scheme, LabelScheme::kDynamic);
}

TEST(Dynamize, FullFractionHardensExactlyActiveFrames) {
  const auto s = soft_with_active(80, 30, 2);
  DistillConfig cfg;
  cfg.dynamic_fraction = 1.0;
  const auto d = dynamize(s, cfg);
  const auto h = harden(s);
  for (std::size_t t = 0; t < 80; ++t) {
    if (s.values(t, 0) >= 0.5f) {
      EXPECT_TRUE(rows_equal_bitwise(d.values, h.values, t)) << t;
    } else {
      EXPECT_TRUE(rows_equal_bitwise(d.values, s.values, t)) << t;
    }
  }
}

TEST(Dynamize, QuarterOfFortyActiveFramesChangesTen) {
  const auto s = soft_with_active(100, 40, 7);
  DistillConfig cfg;
  cfg.seed = 11;
  const auto d = dynamize(s, cfg);
  std::size_t changed = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    if (rows_equal_bitwise(d.values, s.values, t)) continue;
    ++changed;
    EXPECT_GE(s.values(t, 0), 0.5f);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_TRUE(d.values(t, c) == 0.0f || d.values(t, c) == 1.0f);
    }
  }
  EXPECT_EQ(changed, 10u);
}

TEST(Dynamize, SelectionIsSeededPerClip) {
  auto s = soft_with_active(100, 40, 7);
  DistillConfig cfg;
  const auto a = dynamic_selection(s, cfg);
  EXPECT_EQ(a, dynamic_selection(s, cfg));
  s.clip_id = "other";
  EXPECT_NE(a, dynamic_selection(s, cfg));
  cfg.seed = 1;
  s.clip_id = "clip7";
  EXPECT_NE(a, dynamic_selection(s, cfg));
}

TEST(Dynamize, SelectionIsUniformOverActiveFrames) {
  const auto s = soft_with_active(40, 12, 5);
  std::vector<std::size_t> active;
  for (std::size_t t = 0; t < 40; ++t) {
    if (s.values(t, 0) >= 0.5f) active.push_back(t);
  }
  std::vector<double> hits(40, 0.0);
  DistillConfig cfg;
  cfg.dynamic_fraction = 0.25;
  const int trials = 6000;
  for (int seed = 0; seed < trials; ++seed) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto sel = dynamic_selection(s, cfg);
    ASSERT_EQ(sel.size(), 3u);
    for (std::size_t t : sel) hits[t] += 1;
  }
  const double expected = trials * 3.0 / 12.0;
  double chi2 = 0.0;
  for (std::size_t t = 0; t < 40; ++t) {
    const bool is_active = std::find(active.begin(), active.end(), t) != active.end();
    if (!is_active) {
      EXPECT_EQ(hits[t], 0.0);
      continue;
    }
    chi2 += (hits[t] - expected) * (hits[t] - expected) / expected;
  }
  EXPECT_LT(chi2, 31.26);  // 99.9% quantile, 11 degrees of freedom
}

TEST(Dynamize, CountFollowsFloorAcrossTrials) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t frames = std::uniform_int_distribution<std::size_t>(10, 200)(rng);
    const std::size_t active = std::uniform_int_distribution<std::size_t>(0, frames)(rng);
    const auto s = soft_with_active(frames, active, 1000 + trial);
    DistillConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto d = dynamize(s, cfg);
    std::size_t changed = 0;
    for (std::size_t t = 0; t < frames; ++t) changed += !rows_equal_bitwise(d.values, s.values, t);
    EXPECT_EQ(changed, active / 4) << "active " << active;
  }
}

TEST(Dynamize, ValuesStayInUnitInterval) {
  const auto s = soft_with_active(120, 50, 8);
  for (auto scheme : {LabelScheme::kSoft, LabelScheme::kHard, LabelScheme::kDynamic}) {
    const auto out = apply_scheme(s, scheme, {});
    for (float v : out.values.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(DistillConfig, Validation) {
  DistillConfig cfg;
  cfg.dynamic_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg.dynamic_fraction = 0.25;
  cfg.phi = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  EXPECT_THROW(label_scheme_from_string("fuzzy"), InvalidInput);
  EXPECT_EQ(label_scheme_from_string(to_string(LabelScheme::kDynamic)), LabelScheme::kDynamic);
}

// ---------------------------------------------------------------- archive

TEST(Archive, RoundTripIsBitwise) {
  const auto dir = temp_dir("roundtrip");
  std::vector<StudentTargets> targets;
  for (std::uint64_t i = 0; i < 4; ++i) {
    auto s = soft_with_active(10 + i * 7, 5, i);
    s.clip_id = "id_" + std::to_string(i);
    targets.push_back(i % 2 ? harden(s) : s);
  }
  targets.push_back({Matrix<float>(0, 2), LabelScheme::kSoft, "empty"});
  write_targets(dir / "labels.lbl", targets);
  const auto back = read_targets(dir / "labels.lbl");
  ASSERT_EQ(back.size(), targets.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].clip_id, targets[i].clip_id);
    EXPECT_EQ(back[i].scheme, targets[i].scheme);
    ASSERT_EQ(back[i].frames(), targets[i].frames());
    for (std::size_t t = 0; t < back[i].frames(); ++t) {
      EXPECT_TRUE(rows_equal_bitwise(back[i].values, targets[i].values, t));
    }
  }
}

TEST(Archive, IndexGivesRandomAccess) {
  const auto dir = temp_dir("index");
  std::vector<FrameRecord> recs;
  for (int i = 0; i < 5; ++i) {
    recs.push_back({"c" + std::to_string(i), "probs", Matrix<float>(3 + i, 1, float(i))});
  }
  write_archive(dir / "p.lbl", recs);
  LabelArchive a(dir / "p.lbl");
  EXPECT_EQ(a.size(), 5u);
  const auto r = a.read("c3");
  EXPECT_EQ(r.kind, "probs");
  EXPECT_EQ(r.values.rows(), 6u);
  EXPECT_EQ(r.values(5, 0), 3.0f);
  EXPECT_THROW(a.read("nope"), InvalidInput);
  EXPECT_THROW(to_targets(r), FormatError);
}

TEST(Archive, RejectsCorruption) {
  const auto dir = temp_dir("corrupt");
  write_targets(dir / "a.lbl", {soft_with_active(10, 3, 1)});
  {
    std::fstream f(dir / "a.lbl", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(LabelArchive(dir / "a.lbl"), FormatError);
  write_targets(dir / "b.lbl", {soft_with_active(10, 3, 1)});
  std::filesystem::remove(archive_index_path(dir / "b.lbl"));
  EXPECT_THROW(LabelArchive(dir / "b.lbl"), InvalidInput);
  std::vector<StudentTargets> dup{soft_with_active(4, 1, 1), soft_with_active(4, 1, 1)};
  EXPECT_THROW(write_targets(dir / "c.lbl", dup), InvalidInput);
}

// ---------------------------------------------------------------- corpus

TEST(DistillCorpus, EmptyManifestGivesEmptyArchive) {
  const auto dir = temp_dir("empty");
  nn::Crnn<float> teacher(teacher_config());
  const auto r = distill_corpus(teacher, {}, {}, LabelScheme::kSoft, small_dsp());
  EXPECT_TRUE(r.targets.empty());
  EXPECT_FALSE(r.too_many_skipped());
  write_targets(dir / "e.lbl", r.targets);
  EXPECT_EQ(LabelArchive(dir / "e.lbl").size(), 0u);
}

TEST(DistillCorpus, SilentClipWithZeroTeacherGivesHalves) {
  const auto dir = temp_dir("silent");
  dsp::AudioClip silent;
  silent.sample_rate = 8000;
  silent.samples.assign(8000, 0.0f);
  dsp::write_wav(dir / "s.wav", silent);
  nn::Crnn<float> teacher(teacher_config());
  for (auto& p : teacher.params().all()) {
    if (p.trainable) p.value.fill(0.0f);
  }
  const auto r = distill_corpus(teacher, {{"s", dir / "s.wav"}}, {}, LabelScheme::kSoft,
                                small_dsp());
  ASSERT_EQ(r.targets.size(), 1u);
  EXPECT_EQ(r.targets[0].values.rows(), 50u);
  EXPECT_EQ(r.targets[0].values.cols(), 2u);
  for (float v : r.targets[0].values.values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(DistillCorpus, ArchiveMatchesInMemoryTargets) {
  const auto dir = temp_dir("five");
  std::vector<ClipSource> clips;
  for (int i = 0; i < 5; ++i) {
    const auto path = dir / ("c" + std::to_string(i) + ".wav");
    write_tone(path, 0.5 + 0.25 * i, 200.0 + 150.0 * i, i % 2 ? 16000 : 8000);
    clips.push_back({"c" + std::to_string(i), path});
  }
  nn::Crnn<float> teacher(teacher_config());
  teacher.initialize(3);
  const auto r = distill_corpus(teacher, clips, {}, LabelScheme::kSoft, small_dsp());
  ASSERT_EQ(r.targets.size(), 5u);
  write_targets(dir / "soft.lbl", r.targets);
  const auto back = read_targets(dir / "soft.lbl");
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(back[i].values.values().size(), r.targets[i].values.values().size());
    EXPECT_EQ(std::memcmp(back[i].values.data(), r.targets[i].values.data(),
                          r.targets[i].values.size() * sizeof(float)),
              0);
  }
  // Frames follow the front end: ceil(samples at 8 kHz / 160).
  EXPECT_EQ(r.targets[0].frames(), 25u);
  EXPECT_EQ(r.targets[1].frames(), 38u);

  const auto parallel = distill_corpus(teacher, clips, {}, LabelScheme::kSoft, small_dsp(), 3);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(parallel.targets[i].values.values(), r.targets[i].values.values());
  }
  const auto hard = distill_corpus(teacher, clips, {}, LabelScheme::kHard, small_dsp());
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(hard.targets[i].values.values(), harden(r.targets[i]).values.values());
  }
}

TEST(DistillCorpus, UnreadableClipsAreSkippedAndCounted) {
  const auto dir = temp_dir("skip");
  std::vector<ClipSource> clips;
  for (int i = 0; i < 10; ++i) {
    const auto path = dir / ("c" + std::to_string(i) + ".wav");
    write_tone(path, 0.3, 300.0);
    clips.push_back({"c" + std::to_string(i), path});
  }
  clips[4].audio = dir / "missing.wav";
  nn::Crnn<float> teacher(teacher_config());
  auto r = distill_corpus(teacher, clips, {}, LabelScheme::kSoft, small_dsp());
  EXPECT_EQ(r.targets.size(), 9u);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].id, "c4");
  EXPECT_FALSE(r.too_many_skipped());
  {
    std::ofstream bad(dir / "c7.wav");
    bad << "not audio";
  }
  r = distill_corpus(teacher, clips, {}, LabelScheme::kSoft, small_dsp());
  EXPECT_EQ(r.skipped.size(), 2u);
  EXPECT_TRUE(r.too_many_skipped());
}

TEST(DistillCorpus, RejectsMismatchedFrontEnd) {
  nn::Crnn<float> teacher(teacher_config());
  EXPECT_THROW(distill_corpus(teacher, {}, {}, LabelScheme::kSoft, dsp::DspConfig{}),
               InvalidInput);
}
