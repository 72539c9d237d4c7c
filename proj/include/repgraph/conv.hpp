#pragma once

#include <optional>

#include "repgraph/autograd.hpp"

namespace repgraph {

// 3x3 convolution, stride 1, zero padding 1. weight is (C_out, C_in, 3, 3),
// bias (1, C_out, 1, 1) or null.
template <Real T>
Tensor4<T> conv3x3(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>* bias);

// Accumulates into each non-null gradient.
template <Real T>
void conv3x3_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_y, Tensor4<T>* grad_x,
                      Tensor4<T>* grad_w, Tensor4<T>* grad_b);

namespace ag {
template <Real T>
Var<T> conv3x3(Var<T> x, Var<T> weight, std::optional<Var<T>> bias);
}

}  // namespace repgraph
