#pragma once

#include <filesystem>

#include "json.hpp"
#include "wsvad/distill/labels.hpp"
#include "wsvad/dsp/logmel.hpp"
#include "wsvad/eval/postprocess.hpp"
#include "wsvad/nn/crnn.hpp"
#include "wsvad/train/trainer.hpp"

namespace wsvad::cli {

/// Everything the subcommands read from --config. The teacher architecture
/// gets its outputs from the manifest's label vocabulary, so only its
/// layer layout is taken from here.
struct PipelineConfig {
  dsp::DspConfig dsp;
  nn::CrnnConfig teacher_model;
  nn::CrnnConfig student_model = nn::CrnnConfig::student();
  train::TrainConfig teacher_train;
  train::TrainConfig student_train;
  distill::DistillConfig distill;
  eval::ThresholdConfig threshold;
  /// Clip label treated as speech.
  std::string speech_label = "Speech";

  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays `j` on the defaults. Unknown top-level and dsp keys are
  /// rejected.
  static PipelineConfig from_json(const nlohmann::json& j);
};

nlohmann::json dsp_to_json(const dsp::DspConfig& c);
dsp::DspConfig dsp_from_json(const nlohmann::json& j);

/// Defaults when `path` is empty; otherwise the file overlaid on them.
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace wsvad::cli
