#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wsvad/common/matrix.hpp"
#include "wsvad/dsp/augment.hpp"
#include "wsvad/nn/crnn.hpp"
#include "wsvad/train/adam.hpp"

namespace wsvad::train {

/// kClip: clip-level targets through linear-softmax pooling (teacher).
/// kFrame: per-frame targets with a padding mask (student).
enum class TrainMode { kClip, kFrame };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  double lr0 = 1e-3;
  double lr_factor = 0.1;
  std::size_t patience = 5;
  std::size_t batch_size = 64;
  std::size_t epochs = 15;
  double cv_fraction = 0.1;
  std::size_t cv_every_batches = 5000;
  std::uint64_t seed = 0;
  bool spec_augment = true;
  dsp::SpecAugConfig specaug;  // its seed is replaced per item
  /// Standard deviation in frames; applied in clip mode only.
  double time_shift_sigma = 10.0;
  AdamConfig adam;
  /// Workers for batch assembly; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One training clip: T x D features plus targets for the chosen mode.
struct TrainItem {
  std::string id;
  Matrix<float> features;
  std::vector<float> clip_targets;  // E values, clip mode
  Matrix<float> frame_targets;      // T x 2, frame mode
};

/// A padded mini-batch.
struct Batch {
  nn::Tensor<float> features;  // [B, T_max, D]
  std::vector<std::size_t> lengths;
  nn::Tensor<float> targets;  // [B, E] or [B, T_max, 2]
  std::vector<std::string> ids;
};

/// Pads items to the longest (or `min_frames` if larger) length.
Batch make_batch(std::span<const TrainItem* const> items, TrainMode mode,
                 std::size_t min_frames = 0);

/// Mean masked BCE of the model on a batch. In train mode the forward pass
/// uses batch statistics (updating running statistics) and, if `backward`
/// is set, accumulates parameter gradients; gradients are not zeroed here.
double batch_loss(nn::Crnn<float>& model, const Batch& batch, TrainMode mode, nn::Mode nn_mode,
                  bool backward);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> cv;
};

/// Seeded split by clip: round(n * cv_fraction) held out, clamped to
/// [1, n - 1]. Requires n >= 2.
Split split_train_cv(std::size_t n, double cv_fraction, std::uint64_t seed);

struct LogRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  std::string split;  // "train" or "cv"
  double loss = 0.0;
  double lr = 0.0;
  double wallclock = 0.0;  // seconds since the run (or resume) started

  nlohmann::json to_json() const;
};

struct FitOptions {
  /// Written after every cross-validation; empty disables checkpoints.
  std::filesystem::path checkpoint;
  /// Continue from `checkpoint` if it exists.
  bool resume = false;
  /// NDJSON training log, appended to; empty disables.
  std::filesystem::path log_path;
  /// Stop after this many optimizer steps in this call (0 = no limit).
  std::uint64_t max_steps = 0;
  std::function<void(const LogRecord&)> on_record;
};

struct FitResult {
  nn::Crnn<float> model;  // lowest cross-validation loss
  std::vector<LogRecord> log{};
  double best_cv_loss = 0.0;
  bool diverged = false;
  bool finished = false;  // all epochs ran
  std::uint64_t steps = 0;
  std::size_t skipped_steps = 0;
  std::size_t train_items = 0;
  std::size_t cv_items = 0;
};

/// Trains `model` on `data` with Adam, a plateau schedule and
/// cross-validation after each epoch or every cv_every_batches batches,
/// whichever comes first. A NaN cross-validation loss stops training and
/// returns the best weights with `diverged` set.
FitResult fit(nn::Crnn<float> model, const std::vector<TrainItem>& data, TrainMode mode,
              const TrainConfig& cfg, const FitOptions& opts = {});

}  // namespace wsvad::train
