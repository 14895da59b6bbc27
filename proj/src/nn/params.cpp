#include "wsvad/nn/params.hpp"

namespace wsvad::nn {

template <typename T>
Parameter<T>& ParamStore<T>::add(std::string name, Shape shape, bool trainable) {
  if (index_.contains(name)) throw InvalidInput("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  Tensor<T> grad = trainable ? Tensor<T>(shape) : Tensor<T>();
  params_.push_back({std::move(name), Tensor<T>(std::move(shape)), std::move(grad),
                     trainable});
  return params_.back();
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
Parameter<T>& ParamStore<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InvalidInput("unknown parameter " + std::string(name));
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParamStore<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InvalidInput("unknown parameter " + std::string(name));
  return params_[it->second];
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T(0));
}

template <typename T>
std::size_t count_params(const ParamStore<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params.all()) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::size_t count_params(const ParamStore<float>&);
template std::size_t count_params(const ParamStore<double>&);

}  // namespace wsvad::nn
