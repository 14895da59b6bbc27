#include "wsvad/nn/tensor.hpp"

namespace wsvad::nn {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace wsvad::nn
