#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wsvad/common/matrix.hpp"
#include "wsvad/dsp/logmel.hpp"
#include "wsvad/nn/gru.hpp"
#include "wsvad/nn/ops.hpp"
#include "wsvad/nn/params.hpp"

namespace wsvad::nn {

/// One CNN block: a conv layer per entry of `channels` (each preceded by
/// batch norm and followed by LeakyReLU), then L4 pooling.
struct ConvBlockSpec {
  std::vector<std::size_t> channels;
  std::size_t pool_t = 1;
  std::size_t pool_d = 1;

  bool operator==(const ConvBlockSpec&) const = default;
};

struct CrnnConfig {
  std::size_t n_mels = 64;
  std::vector<ConvBlockSpec> blocks{{{32}, 2, 4}, {{128, 128}, 2, 4}, {{128, 128}, 1, 4}};
  std::size_t gru_hidden = 128;
  std::size_t num_outputs = 2;
  double leaky_slope = 0.1;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  /// Optional names of the outputs; empty or exactly num_outputs entries.
  std::vector<std::string> output_labels;
  /// Output column treated as speech.
  std::size_t speech_index = 0;

  /// Two outputs: speech and non-speech.
  static CrnnConfig student();
  /// One output per clip-level label.
  static CrnnConfig teacher(std::vector<std::string> labels, std::size_t speech_index);

  /// Throws InvalidInput on empty blocks, zero widths/strides, or
  /// inconsistent labels.
  void validate() const;
  std::size_t time_factor() const;
  std::size_t pooled_bins() const;
  std::size_t gru_input() const;

  nlohmann::json to_json() const;
  static CrnnConfig from_json(const nlohmann::json& j);

  bool operator==(const CrnnConfig&) const = default;
};

/// Number of frames left after the CNN for an input of `frames` frames.
std::size_t pooled_frames(const CrnnConfig& cfg, std::size_t frames);

/// Activations recorded by a forward pass for use in backward.
template <typename T>
struct CrnnTape {
  struct ConvLayer {
    BatchNormCache<T> bn;
    Tensor<T> conv_in;    // batch-norm output
    Tensor<T> activated;  // masked LeakyReLU output
  };
  struct Block {
    std::vector<ConvLayer> layers;
    Tensor<T> pooled;
    std::vector<std::size_t> lengths_in;
    std::vector<std::size_t> lengths_out;
  };
  std::vector<std::size_t> lengths;
  Tensor<T> input;  // [B, 1, T, D]
  std::vector<Block> blocks;
  Tensor<T> gru_in;  // [B, T', F]
  BiGruCache<T> gru;
  Tensor<T> gru_out;  // [B, T', 2H]
  Tensor<T> coarse;   // [B, T', E] sigmoid output
  Mode mode = Mode::kTrain;
};

/// The CRNN frame-level event detector.
///
/// Input features are [B, T, n_mels] with per-item valid lengths; output
/// probabilities are [B, T, E]. Frames past an item's length are zero in
/// the output and never influence other frames or batch statistics.
template <typename T>
class Crnn {
 public:
  explicit Crnn(CrnnConfig cfg);

  const CrnnConfig& config() const noexcept { return cfg_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }

  /// Seeded parameter initialization; running statistics reset to (0, 1).
  void initialize(std::uint64_t seed);

  /// In train mode, uses batch statistics and updates running statistics.
  Tensor<T> forward(const Tensor<T>& features, std::span<const std::size_t> lengths,
                    Mode mode, CrnnTape<T>* tape = nullptr);

  /// Eval-mode forward; never mutates the model.
  Tensor<T> infer(const Tensor<T>& features,
                  std::span<const std::size_t> lengths = {}) const;

  /// Accumulates parameter gradients for d(loss)/d(probs) = grad_probs.
  void backward(const CrnnTape<T>& tape, const Tensor<T>& grad_probs);

  template <typename U>
  Crnn<U> cast() const;

 private:
  Tensor<T> run(const Tensor<T>& features, std::span<const std::size_t> lengths,
                Mode mode, CrnnTape<T>* tape,
                std::vector<BatchNormCache<T>>* batch_stats) const;

  CrnnConfig cfg_;
  ParamStore<T> params_;
};

/// Single-clip inference: T x D log-Mel features to T x E probabilities.
Matrix<float> crnn_forward(const Crnn<float>& model, const Matrix<float>& features);
Matrix<float> crnn_forward(const Crnn<float>& model, const dsp::LogMelSpec& spec);

/// Stacks T_i x D matrices into a zero-padded [B, max T, D] batch.
template <typename T>
Tensor<T> stack_features(std::span<const Matrix<float>* const> items,
                         std::vector<std::size_t>& lengths);

}  // namespace wsvad::nn
