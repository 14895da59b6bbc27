#include "wsvad/distill/corpus.hpp"

#include <optional>

#include <spdlog/spdlog.h>

#include "wsvad/common/error.hpp"
#include "wsvad/common/parallel.hpp"
#include "wsvad/dsp/audio.hpp"

namespace wsvad::distill {

Matrix<float> teacher_probs(const nn::Crnn<float>& teacher, const std::filesystem::path& audio,
                            const dsp::DspConfig& dsp_cfg) {
  const dsp::AudioClip clip = dsp::read_wav(audio);
  return nn::crnn_forward(teacher, dsp::extract_features(clip, dsp_cfg));
}

DistillReport distill_corpus(const nn::Crnn<float>& teacher, const std::vector<ClipSource>& clips,
                             const DistillConfig& cfg, LabelScheme scheme,
                             const dsp::DspConfig& dsp_cfg, std::size_t threads) {
  cfg.validate();
  dsp_cfg.validate();
  if (static_cast<std::size_t>(dsp_cfg.n_mels) != teacher.config().n_mels) {
    throw InvalidInput("front end produces " + std::to_string(dsp_cfg.n_mels) +
                       " Mel bins, teacher expects " + std::to_string(teacher.config().n_mels));
  }
  if (teacher.config().num_outputs < 2) throw InvalidInput("teacher needs at least 2 outputs");

  std::vector<std::optional<StudentTargets>> done(clips.size());
  std::vector<std::string> errors(clips.size());
  parallel_for(clips.size(), threads, [&](std::size_t i) {
    try {
      const auto probs = teacher_probs(teacher, clips[i].audio, dsp_cfg);
      done[i] = apply_scheme(pool_teacher_labels(probs, cfg, clips[i].id), scheme, cfg);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  DistillReport report;
  report.requested = clips.size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (done[i]) {
      report.targets.push_back(std::move(*done[i]));
    } else {
      spdlog::warn("skipping clip {}: {}", clips[i].id, errors[i]);
      report.skipped.push_back({clips[i].id, errors[i]});
    }
  }
  return report;
}

}  // namespace wsvad::distill
