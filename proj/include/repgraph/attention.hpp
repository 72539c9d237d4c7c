#pragma once

#include <cstddef>

#include "repgraph/tensor.hpp"

namespace repgraph {

// A = softmax_rows(x_theta * x_phi^T); rows are nodes.
template <Real T>
Matrix<T> affinity_matrix(const Matrix<T>& x_theta, const Matrix<T>& x_phi);

// Dense attention over all h*w positions of each batch element:
// out(:, i) = sum_j softmax_j(q(:, i) . k(:, j)) v(:, j).
// When saved_affinity is non-null it receives, per batch element, the
// transposed affinity (row j, column i) as an (n, 1, N, N) tensor.
template <Real T>
Tensor4<T> dense_attention(const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v,
                           Tensor4<T>* saved_affinity_t);

template <Real T>
void dense_attention_backward(const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v,
                              const Tensor4<T>& affinity_t, const Tensor4<T>& grad_out, Tensor4<T>* grad_q,
                              Tensor4<T>* grad_k, Tensor4<T>* grad_v);

// Attention of every query position over its own S sampled keys/values.
// keys is (n, S*cq, hg, wg), values (n, S*cv, hg, wg); query (i, j) uses
// cell (i/stride, j/stride). Channels are split into `groups` independent
// slices, each with its own softmax. weights, when non-null, receives the
// (n, groups, h*w, S) attention weights.
template <Real T>
Tensor4<T> sparse_attention(const Tensor4<T>& q, const Tensor4<T>& keys, const Tensor4<T>& values,
                            std::size_t stride, std::size_t groups, Tensor4<T>* weights);

template <Real T>
void sparse_attention_backward(const Tensor4<T>& q, const Tensor4<T>& keys, const Tensor4<T>& values,
                               std::size_t stride, std::size_t groups, const Tensor4<T>& weights,
                               const Tensor4<T>& grad_out, Tensor4<T>* grad_q, Tensor4<T>* grad_keys,
                               Tensor4<T>* grad_values);

}  // namespace repgraph
