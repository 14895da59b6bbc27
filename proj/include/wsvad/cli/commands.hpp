#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsvad/cli/config.hpp"
#include "wsvad/cli/manifest.hpp"
#include "wsvad/cli/toy_corpus.hpp"
#include "wsvad/distill/corpus.hpp"
#include "wsvad/eval/run.hpp"
#include "wsvad/train/trainer.hpp"

namespace wsvad::cli {

namespace fs = std::filesystem;

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// kExitUsage for bad caller input (InvalidInput, FormatError, ShapeError),
/// kExitFailure otherwise.
int exit_code_for(const std::exception& e) noexcept;

/// Raised when training ends with a non-finite cross-validation loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  fs::path config;
  /// Overrides every seed in the config; each stage derives its own stream.
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

struct TrainOptions {
  CommonOptions common;
  fs::path manifest;
  /// Student training only: the distilled label archive.
  fs::path labels;
  fs::path out;
  /// Defaults to "<out>.log.ndjson".
  fs::path log;
  fs::path checkpoint;
  bool resume = false;
  std::optional<std::size_t> epochs;
};

/// Clip-level training on the manifest's clip labels. The teacher has one
/// output per distinct label; the speech output is the configured
/// speech_label. Writes nothing when training diverges.
train::FitResult cmd_train_teacher(const TrainOptions& opts);

/// Frame-level training on a distilled archive covering every manifest clip.
train::FitResult cmd_train_student(const TrainOptions& opts);

struct DistillOptions {
  CommonOptions common;
  fs::path model;
  fs::path manifest;
  fs::path out;
  distill::LabelScheme scheme = distill::LabelScheme::kSoft;
  std::optional<double> fraction;
};

/// Writes the label archive, plus "<out>.skipped.tsv" when clips were
/// skipped. Throws Error after writing if more than 10% were skipped.
distill::DistillReport cmd_distill(const DistillOptions& opts);

struct InferOptions {
  CommonOptions common;
  fs::path model;
  fs::path manifest;
  /// Probability archive: one T x 1 speech-probability record per clip.
  fs::path out;
  /// Decoded speech segments; defaults to "<out>.segments.tsv".
  fs::path segments;
  std::optional<eval::ThresholdConfig> threshold;
};

std::vector<distill::FrameRecord> cmd_infer(const InferOptions& opts);

struct ScoreOptions {
  CommonOptions common;
  /// Probability archive from infer.
  fs::path probs;
  /// Reference segment file. When empty the manifest's frame_labels files
  /// are used.
  fs::path labels;
  /// Optional; restricts the references to its clips.
  fs::path manifest;
  fs::path out;
  fs::path roc;
  std::optional<eval::ThresholdConfig> threshold;
};

/// Writes the report JSON to `out` (if set) and the ROC to `roc` (if set).
eval::EvalResult cmd_evaluate(const ScoreOptions& opts);

/// Writes the ROC CSV to `out`.
std::vector<eval::RocPoint> cmd_roc_export(const ScoreOptions& opts);

struct SweepRow {
  double phi = 0.0;
  eval::MetricsReport report;
};

/// Simple thresholding at each phi. Writes a CSV with one row per
/// threshold to `opts.out`.
std::vector<SweepRow> cmd_sweep(const ScoreOptions& opts, const std::vector<double>& phis);

struct MixOptions {
  CommonOptions common;
  fs::path manifest;
  /// Manifest of noise recordings.
  fs::path noise;
  std::vector<double> snr_db;
  fs::path out;
};

struct MixedSet {
  double snr_db = 0.0;
  fs::path manifest_path;
  Manifest manifest;
};

/// For each SNR writes <out>/snr_<value>/ with audio/, manifest.tsv (same
/// ids, clip labels and frame-label files) and mix_report.tsv listing the
/// noise clip, the target and the measured SNR of every mixture.
std::vector<MixedSet> cmd_mix_snr(const MixOptions& opts);

ToyCorpus cmd_synth_toy(const ToyCorpusSpec& spec, const fs::path& out, std::size_t threads);

/// Log-Mel features for every manifest clip, in manifest order.
std::vector<dsp::LogMelSpec> manifest_features(const Manifest& m, const dsp::DspConfig& cfg,
                                               std::size_t threads);

/// Reference segments for `probs`-style evaluation: from `labels` if set,
/// else from the manifest's frame_labels files; restricted to the manifest's
/// clips when a manifest is given.
std::map<std::string, std::vector<eval::Segment>> load_references(const fs::path& labels,
                                                                  const fs::path& manifest,
                                                                  const std::string& label);

}  // namespace wsvad::cli
