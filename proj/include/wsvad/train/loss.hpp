#pragma once

#include <cstddef>
#include <span>

#include "wsvad/nn/tensor.hpp"

namespace wsvad::train {

inline constexpr double kBceClamp = 1e-7;

template <typename T>
struct BceResult {
  double loss = 0.0;
  nn::Tensor<T> grad;  // d(loss)/d(pred), zero at masked elements
  std::size_t count = 0;
};

/// Binary cross-entropy averaged over unmasked elements:
///   -mean[y log p + (1 - y) log(1 - p)], p clamped to [1e-7, 1 - 1e-7].
/// `mask` is null (all elements count) or a same-shape tensor whose nonzero
/// entries mark counted elements. Throws InvalidInput if nothing is counted
/// or targets leave [0, 1], ShapeError on shape mismatch.
template <typename T>
BceResult<T> bce(const nn::Tensor<T>& pred, const nn::Tensor<T>& target,
                 const nn::Tensor<T>* mask = nullptr);

/// [B, T, E] mask with ones on the first lengths[b] frames of each item.
template <typename T>
nn::Tensor<T> frame_mask(std::span<const std::size_t> lengths, std::size_t frames,
                         std::size_t outputs);

}  // namespace wsvad::train
