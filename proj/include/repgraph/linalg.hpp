#pragma once

#include <algorithm>
#include <cstddef>

#include "repgraph/error.hpp"
#include "repgraph/tensor.hpp"

namespace repgraph {

// c[m x p] (+)= a[m x k] * b[k x p], all row-major with explicit leading
// dimensions. Fixed i-k-j order, so results are bit-stable.
template <Real T>
inline void gemm(std::size_t m, std::size_t k, std::size_t p, const T* a, std::size_t lda, const T* b,
                 std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < p; ++j) crow[j] = T{0};
    }
    const T* arow = a + i * lda;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* __restrict brow = b + kk * ldb;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[cols x rows] = transpose of in[rows x cols] (leading dimension ld_in).
template <Real T>
inline void transpose_into(std::size_t rows, std::size_t cols, const T* in, std::size_t ld_in, T* out,
                           std::size_t ld_out) {
  constexpr std::size_t tile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += tile) {
    for (std::size_t j0 = 0; j0 < cols; j0 += tile) {
      const std::size_t i1 = std::min(rows, i0 + tile);
      const std::size_t j1 = std::min(cols, j0 + tile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) out[j * ld_out + i] = in[i * ld_in + j];
    }
  }
}

template <Real T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::dimension, "matmul " + a.shape_str() + " x " + b.shape_str());
  }
  Matrix<T> c(a.rows(), b.cols());
  gemm(a.rows(), a.cols(), b.cols(), a.data().data(), a.cols(), b.data().data(), b.cols(), c.data().data(),
       c.cols(), false);
  return c;
}

// Flattens the spatial grid into nodes: row b*h*w + y*w + x holds the
// c-vector at (b, :, y, x).
template <Real T>
Matrix<T> reshape_nodes(const Tensor4<T>& x) {
  const std::size_t hw = x.shape().spatial();
  Matrix<T> m(x.n() * hw, x.c());
  for (std::size_t b = 0; b < x.n(); ++b) {
    transpose_into(x.c(), hw, x.batch(b), hw, m.row(b * hw), x.c());
  }
  return m;
}

template <Real T>
Tensor4<T> unreshape_nodes(const Matrix<T>& m, Shape4 shape) {
  const std::size_t hw = shape.spatial();
  if (m.rows() != shape.n * hw || m.cols() != shape.c) {
    throw Error(ErrorCode::dimension, "cannot restore " + m.shape_str() + " into " + shape.str());
  }
  Tensor4<T> x(shape);
  for (std::size_t b = 0; b < shape.n; ++b) {
    transpose_into(hw, shape.c, m.row(b * hw), shape.c, x.batch(b), hw);
  }
  return x;
}

}  // namespace repgraph
