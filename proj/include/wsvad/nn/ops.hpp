#pragma once

#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include "wsvad/nn/tensor.hpp"

// Forward/backward kernels for the layers the CRNN is built from.
//
// Layouts: feature maps are [B, C, T, D]; sequences are [B, T, F]. Ops that
// take `lengths` treat time steps at or beyond lengths[b] as padding: they
// are excluded from statistics, produce zero output, and receive zero
// gradient. An empty `lengths` span means every step is valid.
//
// Backward functions accumulate (+=) into parameter gradients and assign
// input gradients.

namespace wsvad::nn {

enum class Mode { kTrain, kEval };

/// Zeroes time steps beyond each item's length. Time is axis 2 for rank-4
/// tensors and axis 1 for rank-3 tensors.
template <typename T>
void mask_time(Tensor<T>& x, std::span<const std::size_t> lengths);

// 3x3 convolution, stride 1, zero padding 1 on both spatial axes.
// kernel [C_out, C_in, 3, 3]; bias [C_out] or nullptr.
template <typename T>
Tensor<T> conv2d_3x3(const Tensor<T>& input, const Tensor<T>& kernel,
                     const std::type_identity_t<Tensor<T>>* bias = nullptr);

template <typename T>
void conv2d_3x3_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                         const Tensor<T>& grad_out, Tensor<T>* grad_input,
                         Tensor<T>& grad_kernel,
                         std::type_identity_t<Tensor<T>>* grad_bias = nullptr);

/// Per-channel statistics and normalized activations kept for backward.
template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<double> mean;
  std::vector<double> var;  // biased
  std::vector<double> inv_std;
  std::size_t count = 0;  // valid positions per channel
  std::vector<std::size_t> lengths;
  Mode mode = Mode::kTrain;
};

/// Training-mode batch norm over (B, valid T, D) per channel.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& input,
                           std::span<const std::size_t> lengths,
                           const Tensor<T>& scale, const Tensor<T>& shift,
                           double eps,
                           std::type_identity_t<BatchNormCache<T>>* cache = nullptr);

/// Inference-mode batch norm using running statistics.
template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& input,
                          std::span<const std::size_t> lengths,
                          const Tensor<T>& scale, const Tensor<T>& shift,
                          const Tensor<T>& running_mean,
                          const Tensor<T>& running_var, double eps,
                          std::type_identity_t<BatchNormCache<T>>* cache = nullptr);

/// running = (1 - momentum) * running + momentum * batch; the variance uses
/// the unbiased batch estimate.
template <typename T>
void update_running_stats(Tensor<T>& running_mean, Tensor<T>& running_var,
                          const BatchNormCache<T>& cache, double momentum);

template <typename T>
void batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& scale,
                         const BatchNormCache<T>& cache, Tensor<T>* grad_input,
                         Tensor<T>& grad_scale, Tensor<T>& grad_shift);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, std::type_identity_t<T> slope);

/// `output` is the forward result; for slope > 0 its sign equals the
/// input's, so the input need not be kept.
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out,
                              std::type_identity_t<T> slope);

/// Power-mean pooling with p = 4 over non-overlapping stride_t x stride_d
/// windows of a [B, C, T, D] map: y = (mean |x|^4)^(1/4). Partial windows
/// at the right edges are zero-padded, so output extents are
/// ceil(T / stride_t) x ceil(D / stride_d).
template <typename T>
Tensor<T> l4_pool(const Tensor<T>& input, std::size_t stride_t,
                  std::size_t stride_d);

template <typename T>
Tensor<T> l4_pool_backward(const Tensor<T>& input, const Tensor<T>& output,
                           const Tensor<T>& grad_out, std::size_t stride_t,
                           std::size_t stride_d);

/// Affine map over the last axis: input [..., F], weight [E, F], bias [E].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <typename T>
void linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input,
                     Tensor<T>& grad_weight, Tensor<T>& grad_bias);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& grad_out);

/// [B, T', E] -> [B, frames, E] by repeating each step `factor` times and
/// cropping to `frames` (frames <= T' * factor).
template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& input, std::size_t factor,
                          std::size_t frames);

template <typename T>
Tensor<T> upsample_repeat_backward(const Tensor<T>& grad_out,
                                   std::size_t factor, std::size_t steps);

/// Linear-softmax temporal pooling over valid frames of probs [B, T, E]:
/// y(e) = sum_t p_t(e)^2 / sum_t p_t(e), and 0 when the denominator is 0.
template <typename T>
Tensor<T> linear_softmax_pool(const Tensor<T>& probs,
                              std::span<const std::size_t> lengths);

template <typename T>
Tensor<T> linear_softmax_pool_backward(const Tensor<T>& probs,
                                       std::span<const std::size_t> lengths,
                                       const Tensor<T>& grad_out);

}  // namespace wsvad::nn
