#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "wsvad/common/aligned.hpp"
#include "wsvad/common/error.hpp"

namespace wsvad {

/// Dense row-major matrix. Used for time x feature data (spectrograms,
/// frame probabilities, frame targets).
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, AlignedVector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_size();
  }
  Matrix(std::size_t rows, std::size_t cols, const std::vector<T>& data)
      : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    check_size();
  }
  Matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> data)
      : rows_(rows), cols_(cols), data_(data) {
    check_size();
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  AlignedVector<T>& values() noexcept { return data_; }
  const AlignedVector<T>& values() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  void check_size() const {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data size does not match extents");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedVector<T> data_;
};

}  // namespace wsvad
