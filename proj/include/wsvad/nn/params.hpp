#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>

#include "wsvad/nn/tensor.hpp"

namespace wsvad::nn {

/// A named tensor with its gradient accumulator. Running statistics are
/// stored as non-trainable parameters so they serialize alongside weights.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Insertion-ordered parameter collection with stable element addresses.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& add(std::string name, Shape shape, bool trainable = true);

  bool contains(std::string_view name) const;
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::deque<Parameter<T>>& all() noexcept { return params_; }
  const std::deque<Parameter<T>>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  void zero_grad();

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Total element count of trainable parameters.
template <typename T>
std::size_t count_params(const ParamStore<T>& params);

}  // namespace wsvad::nn
