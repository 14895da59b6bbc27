#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "wsvad/distill/labels.hpp"
#include "wsvad/dsp/logmel.hpp"
#include "wsvad/nn/crnn.hpp"

namespace wsvad::distill {

struct ClipSource {
  std::string id;
  std::filesystem::path audio;
};

struct SkippedClip {
  std::string id;
  std::string reason;
};

struct DistillReport {
  std::vector<StudentTargets> targets;  // manifest order, skipped clips omitted
  std::vector<SkippedClip> skipped;
  std::size_t requested = 0;

  /// More than 10% of the requested clips were skipped.
  bool too_many_skipped() const noexcept { return skipped.size() * 10 > requested; }
};

/// Teacher frame probabilities for one clip: read, resample, log-Mel,
/// eval-mode forward.
Matrix<float> teacher_probs(const nn::Crnn<float>& teacher, const std::filesystem::path& audio,
                            const dsp::DspConfig& dsp_cfg);

/// Runs the teacher over every clip and converts its output to student
/// targets of the given scheme. Clips that fail to load are skipped and
/// reported. Work is spread over `threads` workers; the result does not
/// depend on the count.
DistillReport distill_corpus(const nn::Crnn<float>& teacher, const std::vector<ClipSource>& clips,
                             const DistillConfig& cfg, LabelScheme scheme,
                             const dsp::DspConfig& dsp_cfg = {}, std::size_t threads = 1);

}  // namespace wsvad::distill
