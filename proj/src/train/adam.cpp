#include "wsvad/train/adam.hpp"

#include <cmath>

namespace wsvad::train {

template <typename T>
Adam<T>::Adam(nn::ParamStore<T>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.trainable ? p.value.shape() : nn::Shape{});
    v_.emplace_back(p.trainable ? p.value.shape() : nn::Shape{});
  }
}

template <typename T>
AdamStepResult Adam<T>::step(double lr) {
  AdamStepResult result;
  for (const auto& p : params_->all()) {
    if (!p.trainable) continue;
    for (T g : p.grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        result.bad_params.push_back(p.name);
        break;
      }
    }
  }
  if (!result.bad_params.empty()) {
    result.applied = false;
    return result;
  }

  ++steps_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto& all = params_->all();
  for (std::size_t k = 0; k < all.size(); ++k) {
    auto& p = all[k];
    if (!p.trainable) continue;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg_.eps));
    }
  }
  return result;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace wsvad::train
