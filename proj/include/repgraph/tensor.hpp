#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "repgraph/error.hpp"

namespace repgraph {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t spatial() const { return h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Dense n-c-h-w tensor, row-major with w fastest.
template <Real T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw Error(ErrorCode::length_mismatch, "tensor " + shape_.str() + " needs " +
                                                  std::to_string(shape_.numel()) + " values, got " +
                                                  std::to_string(data_.size()));
    }
  }
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{0})
      : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return data_[index(b, ch, y, x)];
  }
  const T& operator()(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[index(b, ch, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  // Pointer to the h*w plane of (batch, channel).
  T* plane(std::size_t b, std::size_t ch) { return data_.data() + (b * shape_.c + ch) * shape_.spatial(); }
  const T* plane(std::size_t b, std::size_t ch) const {
    return data_.data() + (b * shape_.c + ch) * shape_.spatial();
  }
  // Pointer to the c*h*w block of one batch element.
  T* batch(std::size_t b) { return data_.data() + b * shape_.c * shape_.spatial(); }
  const T* batch(std::size_t b) const { return data_.data() + b * shape_.c * shape_.spatial(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <Real U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor4<U>(shape_, std::move(out));
  }

  // Bitwise equality of shape and values.
  bool identical(const Tensor4& other) const {
    if (!(shape_ == other.shape_)) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (std::memcmp(&data_[i], &other.data_[i], sizeof(T)) != 0) return false;
    }
    return true;
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

// Row-major dense matrix used by the attention contractions.
template <Real T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::length_mismatch, "matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                                  " needs " + std::to_string(rows_ * cols_) + " values");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::string shape_str() const { return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]"; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  T* row(std::size_t i) { return data_.data() + i * cols_; }
  const T* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace repgraph
