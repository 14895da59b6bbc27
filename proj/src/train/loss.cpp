#include "wsvad/train/loss.hpp"

#include <algorithm>
#include <cmath>

namespace wsvad::train {

template <typename T>
BceResult<T> bce(const nn::Tensor<T>& pred, const nn::Tensor<T>& target,
                 const nn::Tensor<T>* mask) {
  nn::expect_shape(target, pred.shape(), "bce target");
  if (mask) nn::expect_shape(*mask, pred.shape(), "bce mask");
  BceResult<T> r;
  r.grad = nn::Tensor<T>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && (*mask)[i] == T(0)) continue;
    const double y = target[i];
    if (!(y >= 0.0 && y <= 1.0)) throw InvalidInput("bce: target outside [0, 1]");
    ++r.count;
  }
  if (r.count == 0) throw InvalidInput("bce: every element is masked");

  const double inv_n = 1.0 / static_cast<double>(r.count);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && (*mask)[i] == T(0)) continue;
    const double raw = pred[i];
    const double p = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    const double y = target[i];
    total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    // The clamp is flat outside its range.
    if (raw > kBceClamp && raw < 1.0 - kBceClamp) {
      r.grad[i] = static_cast<T>((-y / p + (1.0 - y) / (1.0 - p)) * inv_n);
    }
  }
  r.loss = total * inv_n;
  return r;
}

template <typename T>
nn::Tensor<T> frame_mask(std::span<const std::size_t> lengths, std::size_t frames,
                         std::size_t outputs) {
  nn::Tensor<T> m({lengths.size(), frames, outputs});
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t len = std::min(lengths[b], frames);
    std::fill(m.data() + b * frames * outputs, m.data() + (b * frames + len) * outputs, T(1));
  }
  return m;
}

template BceResult<float> bce(const nn::Tensor<float>&, const nn::Tensor<float>&,
                              const nn::Tensor<float>*);
template BceResult<double> bce(const nn::Tensor<double>&, const nn::Tensor<double>&,
                               const nn::Tensor<double>*);
template nn::Tensor<float> frame_mask<float>(std::span<const std::size_t>, std::size_t,
                                             std::size_t);
template nn::Tensor<double> frame_mask<double>(std::span<const std::size_t>, std::size_t,
                                               std::size_t);

}  // namespace wsvad::train
