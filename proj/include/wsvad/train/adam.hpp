#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsvad/nn/params.hpp"

namespace wsvad::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamStepResult {
  bool applied = true;
  /// Names of parameters with non-finite gradients when the step was
  /// skipped.
  std::vector<std::string> bad_params;
};

/// Adam with bias correction over the trainable tensors of a ParamStore.
/// The store must outlive the optimizer and keep its layout.
template <typename T>
class Adam {
 public:
  Adam(nn::ParamStore<T>& params, AdamConfig cfg = {});

  /// Applies one update from the accumulated gradients. If any gradient is
  /// non-finite nothing changes and the offending names are reported.
  AdamStepResult step(double lr);

  std::uint64_t steps() const noexcept { return steps_; }
  void set_steps(std::uint64_t n) noexcept { steps_ = n; }
  const AdamConfig& config() const noexcept { return cfg_; }

  /// Moment tensors, indexed like params.all(); empty for non-trainable.
  std::vector<nn::Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() noexcept { return v_; }
  const std::vector<nn::Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<nn::Tensor<T>>& second_moments() const noexcept { return v_; }

 private:
  nn::ParamStore<T>* params_;
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<nn::Tensor<T>> m_;
  std::vector<nn::Tensor<T>> v_;
};

}  // namespace wsvad::train
