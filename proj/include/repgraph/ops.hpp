#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "repgraph/tensor.hpp"

namespace repgraph {

// 1x1 convolution: weight (c_out, c_in, 1, 1), optional bias (1, c_out, 1, 1).
template <Real T>
struct Projection1x1 {
  Tensor4<T> weight;
  std::optional<Tensor4<T>> bias;

  std::size_t c_out() const { return weight.n(); }
  std::size_t c_in() const { return weight.c(); }
};

template <Real T>
Tensor4<T> project_1x1(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>* bias);

template <Real T>
Tensor4<T> project_1x1(const Tensor4<T>& x, const Projection1x1<T>& p) {
  return project_1x1(x, p.weight, p.bias ? &*p.bias : nullptr);
}

// Accumulates into whichever of grad_x / grad_w / grad_b is non-null.
template <Real T>
void project_1x1_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_y,
                          Tensor4<T>* grad_x, Tensor4<T>* grad_w, Tensor4<T>* grad_b);

// Numerically stable row softmax (per-row max subtraction).
template <Real T>
Matrix<T> softmax_rows(const Matrix<T>& a);
template <Real T>
void softmax_inplace(T* row, std::size_t len);

template <Real T>
Tensor4<T> relu(const Tensor4<T>& x);

template <Real T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNormStats fresh(std::size_t channels) {
    return BatchNormStats{std::vector<T>(channels, T{0}), std::vector<T>(channels, T{1})};
  }
};

template <Real T>
struct BatchNormParams {
  Tensor4<T> gamma;  // (1, C, 1, 1)
  Tensor4<T> beta;   // (1, C, 1, 1)
  BatchNormStats<T> stats;

  static BatchNormParams identity(std::size_t channels) {
    return BatchNormParams{Tensor4<T>(1, channels, 1, 1, T{1}), Tensor4<T>(1, channels, 1, 1, T{0}),
                           BatchNormStats<T>::fresh(channels)};
  }
};

// Values saved by the forward pass for the backward rule.
template <Real T>
struct BatchNormCache {
  Tensor4<T> x_hat;
  std::vector<T> inv_std;
  bool training = false;
};

// Training mode normalises with batch statistics over (n, h, w) and updates
// the running estimates (unbiased variance); eval mode uses the running
// estimates.
template <Real T>
Tensor4<T> batch_norm_forward(const Tensor4<T>& x, const Tensor4<T>& gamma, const Tensor4<T>& beta,
                              BatchNormStats<T>& stats, bool training, BatchNormCache<T>* cache);

template <Real T>
void batch_norm_backward(const Tensor4<T>& grad_y, const Tensor4<T>& gamma, const BatchNormCache<T>& cache,
                         Tensor4<T>* grad_x, Tensor4<T>* grad_gamma, Tensor4<T>* grad_beta);

template <Real T>
Tensor4<T> batch_norm(const Tensor4<T>& x, BatchNormParams<T>& p, bool training) {
  return batch_norm_forward<T>(x, p.gamma, p.beta, p.stats, training, nullptr);
}

// Mean over g x g blocks; edge blocks may be partial and are averaged over
// the cells they actually cover. Output is (n, c, ceil(h/g), ceil(w/g)).
template <Real T>
Tensor4<T> avg_pool_grid(const Tensor4<T>& x, std::size_t g);
template <Real T>
void avg_pool_grid_backward(const Shape4& x_shape, std::size_t g, const Tensor4<T>& grad_y, Tensor4<T>& grad_x);

template <Real T>
struct SamplePoint {
  std::size_t batch = 0;
  T y = 0;
  T x = 0;
};

// Bilinear kernel G(t, p) = max(0, 1-|t_y-p_y|) * max(0, 1-|t_x-p_x|) over the
// four integral neighbours of p; neighbours outside the map contribute zero.
// Returns one row of c values per point.
template <Real T>
Matrix<T> bilinear_sample(const Tensor4<T>& x, std::span<const SamplePoint<T>> points);

// Offset-field sampler. The anchor grid has one cell per stride x stride
// block of x; the anchor of cell (i, j) is (i*stride, j*stride). offsets is
// (n, 2S, ceil(h/stride), ceil(w/stride)) with channel 2k = dy, 2k+1 = dx of
// sample k. The result is (n, S*c, hg, wg) with channel k*c + ch.
template <Real T>
Tensor4<T> sample_offsets(const Tensor4<T>& x, const Tensor4<T>& offsets, std::size_t stride);

template <Real T>
void sample_offsets_backward(const Tensor4<T>& x, const Tensor4<T>& offsets, std::size_t stride,
                             const Tensor4<T>& grad_y, Tensor4<T>* grad_x, Tensor4<T>* grad_offsets);

template <Real T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace repgraph
