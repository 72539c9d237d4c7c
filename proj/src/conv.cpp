#include "repgraph/conv.hpp"

#include <vector>

#include "repgraph/error.hpp"
#include "repgraph/linalg.hpp"

namespace repgraph {
namespace {

void check(const Shape4& xs, const Shape4& ws, const Shape4* bs) {
  if (ws.h != 3 || ws.w != 3 || ws.c != xs.c) {
    throw Error(ErrorCode::dimension, "conv3x3 weight " + ws.str() + " for input " + xs.str());
  }
  if (bs && !(*bs == Shape4{1, ws.n, 1, 1})) {
    throw Error(ErrorCode::dimension, "conv3x3 bias " + bs->str() + " for " + std::to_string(ws.n) + " outputs");
  }
}

// cols[(ci*9 + ky*3 + kx) x (y*w + x)] = x[ci, y+ky-1, x+kx-1], zero outside.
template <Real T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx + kx) - 1;
            const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
            row[y * w + xx] = inside ? x[ci * hw + static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] : T{0};
          }
        }
      }
    }
  }
}

template <Real T>
void col2im_add(const T* cols, std::size_t c, std::size_t h, std::size_t w, T* x) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + (ci * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const long sx = static_cast<long>(xx + kx) - 1;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            x[ci * hw + static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += row[y * w + xx];
          }
        }
      }
    }
  }
}

}  // namespace

template <Real T>
Tensor4<T> conv3x3(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>* bias) {
  check(x.shape(), weight.shape(), bias ? &bias->shape() : nullptr);
  const std::size_t co = weight.n();
  const std::size_t k = x.c() * 9;
  const std::size_t hw = x.shape().spatial();
  Tensor4<T> y(x.n(), co, x.h(), x.w());
  std::vector<T> cols(k * hw);
  for (std::size_t b = 0; b < x.n(); ++b) {
    im2col(x.batch(b), x.c(), x.h(), x.w(), cols.data());
    T* yb = y.batch(b);
    gemm(co, k, hw, weight.data().data(), k, cols.data(), hw, yb, hw, false);
    if (bias) {
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t i = 0; i < hw; ++i) yb[o * hw + i] += (*bias)[o];
      }
    }
  }
  return y;
}

template <Real T>
void conv3x3_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_y, Tensor4<T>* grad_x,
                      Tensor4<T>* grad_w, Tensor4<T>* grad_b) {
  const std::size_t co = weight.n();
  const std::size_t k = x.c() * 9;
  const std::size_t hw = x.shape().spatial();
  if (!(grad_y.shape() == Shape4{x.n(), co, x.h(), x.w()})) {
    throw Error(ErrorCode::dimension, "conv3x3 grad " + grad_y.shape().str() + " for input " + x.shape().str());
  }
  std::vector<T> cols(k * hw);
  std::vector<T> cols_t(hw * k);
  std::vector<T> w_t;
  if (grad_x) {
    w_t.resize(k * co);
    transpose_into(co, k, weight.data().data(), k, w_t.data(), co);
  }
  for (std::size_t b = 0; b < x.n(); ++b) {
    const T* gy = grad_y.batch(b);
    if (grad_w) {
      im2col(x.batch(b), x.c(), x.h(), x.w(), cols.data());
      transpose_into(k, hw, cols.data(), hw, cols_t.data(), k);
      gemm(co, hw, k, gy, hw, cols_t.data(), k, grad_w->data().data(), k, true);
    }
    if (grad_b) {
      for (std::size_t o = 0; o < co; ++o) {
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += gy[o * hw + i];
        (*grad_b)[o] += s;
      }
    }
    if (grad_x) {
      gemm(k, co, hw, w_t.data(), co, gy, hw, cols.data(), hw, false);
      col2im_add(cols.data(), x.c(), x.h(), x.w(), grad_x->batch(b));
    }
  }
}

namespace ag {

template <Real T>
Var<T> conv3x3(Var<T> x, Var<T> weight, std::optional<Var<T>> bias) {
  const Tensor4<T>* bias_value = bias ? &bias->value() : nullptr;
  Tensor4<T> y = repgraph::conv3x3(x.value(), weight.value(), bias_value);
  const auto* xv = &x.value();
  const auto* wv = &weight.value();
  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape->push("conv3x3", inputs, std::move(y), [xv, wv](const Tensor4<T>& g, std::span<Tensor4<T>* const> in) {
    conv3x3_backward(*xv, *wv, g, in[0], in[1], in.size() > 2 ? in[2] : nullptr);
  });
}

template Var<float> conv3x3<float>(Var<float>, Var<float>, std::optional<Var<float>>);
template Var<double> conv3x3<double>(Var<double>, Var<double>, std::optional<Var<double>>);

}  // namespace ag

template Tensor4<float> conv3x3<float>(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>*);
template Tensor4<double> conv3x3<double>(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>*);
template void conv3x3_backward<float>(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&,
                                      Tensor4<float>*, Tensor4<float>*, Tensor4<float>*);
template void conv3x3_backward<double>(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&,
                                       Tensor4<double>*, Tensor4<double>*, Tensor4<double>*);

}  // namespace repgraph
