#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wsvad/nn/tensor.hpp"

namespace wsvad::nn {

/// Weights of one GRU direction, gate order (r, z, n):
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
template <typename T>
struct GruWeights {
  const Tensor<T>* w_ih = nullptr;  // [3H, F]
  const Tensor<T>* w_hh = nullptr;  // [3H, H]
  const Tensor<T>* b_ih = nullptr;  // [3H]
  const Tensor<T>* b_hh = nullptr;  // [3H]

  std::size_t hidden() const { return w_hh->dim(1); }
};

template <typename T>
struct GruGrads {
  Tensor<T>* w_ih = nullptr;
  Tensor<T>* w_hh = nullptr;
  Tensor<T>* b_ih = nullptr;
  Tensor<T>* b_hh = nullptr;
};

/// Per-item, per-direction activations kept for backward. Rows are in
/// processing order (reversed in time for the backward direction).
template <typename T>
struct GruTrace {
  std::vector<T> gates;   // [len, 3H]: r, z, n
  std::vector<T> h_prev;  // [len, H]
  std::vector<T> hn;      // [len, H]: W_hn h + b_hn
};

template <typename T>
struct BiGruCache {
  std::vector<GruTrace<T>> fwd;
  std::vector<GruTrace<T>> bwd;
  std::vector<std::size_t> lengths;
};

/// Bidirectional GRU over [B, T, F] producing [B, T, 2H] with the forward
/// half first. Each item runs only over its first lengths[b] steps (all
/// steps if `lengths` is empty); outputs past that are zero. Initial
/// hidden state is zero in both directions.
template <typename T>
Tensor<T> bigru_forward(const Tensor<T>& input, std::span<const std::size_t> lengths,
                        const GruWeights<T>& fwd, const GruWeights<T>& bwd,
                        BiGruCache<T>* cache = nullptr);

/// Accumulates weight gradients and, if `grad_input` is non-null, assigns
/// the input gradient.
template <typename T>
void bigru_backward(const Tensor<T>& input, const GruWeights<T>& fwd,
                    const GruWeights<T>& bwd, const BiGruCache<T>& cache,
                    const Tensor<T>& grad_out, Tensor<T>* grad_input,
                    const GruGrads<T>& grad_fwd, const GruGrads<T>& grad_bwd);

}  // namespace wsvad::nn
