#include "repgraph/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "repgraph/error.hpp"
#include "repgraph/linalg.hpp"

namespace repgraph {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Four-neighbour stencil of a fractional position. Rows/cols outside the map
// are flagged so callers can treat them as zero.
template <Real T>
struct Stencil {
  long y0 = 0;
  long x0 = 0;
  T wy[2] = {0, 0};
  T wx[2] = {0, 0};
  bool row_ok[2] = {false, false};
  bool col_ok[2] = {false, false};
  bool any = false;
};

template <Real T>
Stencil<T> make_stencil(T py, T px, std::size_t h, std::size_t w) {
  Stencil<T> s;
  // Far outside (or non-finite): no neighbour can be inside the map.
  if (!(py > T(-1) && py < static_cast<T>(h) && px > T(-1) && px < static_cast<T>(w))) return s;
  const T fy0 = std::floor(py);
  const T fx0 = std::floor(px);
  s.y0 = static_cast<long>(fy0);
  s.x0 = static_cast<long>(fx0);
  const T fy = py - fy0;
  const T fx = px - fx0;
  s.wy[0] = T(1) - fy;
  s.wy[1] = fy;
  s.wx[0] = T(1) - fx;
  s.wx[1] = fx;
  for (int d = 0; d < 2; ++d) {
    s.row_ok[d] = s.y0 + d >= 0 && s.y0 + d < static_cast<long>(h);
    s.col_ok[d] = s.x0 + d >= 0 && s.x0 + d < static_cast<long>(w);
  }
  s.any = (s.row_ok[0] || s.row_ok[1]) && (s.col_ok[0] || s.col_ok[1]);
  return s;
}

template <Real T>
T stencil_value(const Stencil<T>& s, const T* plane, std::size_t w) {
  T v = 0;
  for (int dy = 0; dy < 2; ++dy) {
    if (!s.row_ok[dy]) continue;
    const T* row = plane + static_cast<std::size_t>(s.y0 + dy) * w;
    for (int dx = 0; dx < 2; ++dx) {
      if (!s.col_ok[dx]) continue;
      v += s.wy[dy] * s.wx[dx] * row[s.x0 + dx];
    }
  }
  return v;
}

template <Real T>
T cell(const Stencil<T>& s, const T* plane, std::size_t w, int dy, int dx) {
  if (!s.row_ok[dy] || !s.col_ok[dx]) return T{0};
  return plane[static_cast<std::size_t>(s.y0 + dy) * w + static_cast<std::size_t>(s.x0 + dx)];
}

}  // namespace

template <Real T>
Tensor4<T> project_1x1(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>* bias) {
  const std::size_t c_out = weight.n();
  const std::size_t c_in = weight.c();
  if (weight.h() != 1 || weight.w() != 1) {
    throw Error(ErrorCode::dimension, "1x1 projection weight must be (c_out, c_in, 1, 1), got " + weight.shape().str());
  }
  if (x.c() != c_in) {
    throw Error(ErrorCode::dimension,
                "projection expects " + std::to_string(c_in) + " input channels, input is " + x.shape().str());
  }
  if (bias && bias->numel() != c_out) {
    throw Error(ErrorCode::dimension, "bias " + bias->shape().str() + " does not match c_out=" + std::to_string(c_out));
  }
  const std::size_t hw = x.shape().spatial();
  Tensor4<T> y(x.n(), c_out, x.h(), x.w());
  for (std::size_t b = 0; b < x.n(); ++b) {
    gemm(c_out, c_in, hw, weight.data().data(), c_in, x.batch(b), hw, y.batch(b), hw, false);
    if (bias) {
      for (std::size_t o = 0; o < c_out; ++o) {
        T* p = y.plane(b, o);
        const T bv = (*bias)[o];
        for (std::size_t i = 0; i < hw; ++i) p[i] += bv;
      }
    }
  }
  return y;
}

template <Real T>
void project_1x1_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_y,
                          Tensor4<T>* grad_x, Tensor4<T>* grad_w, Tensor4<T>* grad_b) {
  const std::size_t c_out = weight.n();
  const std::size_t c_in = weight.c();
  const std::size_t hw = x.shape().spatial();
  std::vector<T> wt;
  if (grad_x) {
    wt.resize(c_in * c_out);
    transpose_into(c_out, c_in, weight.data().data(), c_in, wt.data(), c_out);
  }
  std::vector<T> xt(grad_w ? hw * c_in : 0);
  for (std::size_t b = 0; b < x.n(); ++b) {
    if (grad_x) gemm(c_in, c_out, hw, wt.data(), c_out, grad_y.batch(b), hw, grad_x->batch(b), hw, true);
    if (grad_w) {
      transpose_into(c_in, hw, x.batch(b), hw, xt.data(), c_in);
      gemm(c_out, hw, c_in, grad_y.batch(b), hw, xt.data(), c_in, grad_w->data().data(), c_in, true);
    }
    if (grad_b) {
      for (std::size_t o = 0; o < c_out; ++o) {
        const T* p = grad_y.plane(b, o);
        T s = 0;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
        (*grad_b)[o] += s;
      }
    }
  }
}

template <Real T>
void softmax_inplace(T* row, std::size_t len) {
  if (len == 0) return;
  T mx = row[0];
  for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, row[j]);
  T sum = 0;
  for (std::size_t j = 0; j < len; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < len; ++j) row[j] *= inv;
}

template <Real T>
Matrix<T> softmax_rows(const Matrix<T>& a) {
  Matrix<T> out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i), out.cols());
  return out;
}

template <Real T>
Tensor4<T> relu(const Tensor4<T>& x) {
  Tensor4<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <Real T>
Tensor4<T> batch_norm_forward(const Tensor4<T>& x, const Tensor4<T>& gamma, const Tensor4<T>& beta,
                              BatchNormStats<T>& stats, bool training, BatchNormCache<T>* cache) {
  const std::size_t C = x.c();
  const std::size_t hw = x.shape().spatial();
  const std::size_t count = x.n() * hw;
  if (count == 0) throw Error(ErrorCode::contract, "batch_norm on empty batch " + x.shape().str());
  if (gamma.numel() != C || beta.numel() != C || stats.running_mean.size() != C || stats.running_var.size() != C) {
    throw Error(ErrorCode::dimension, "batch_norm parameters do not match " + std::to_string(C) + " channels");
  }
  if (!(stats.eps > 0)) throw Error(ErrorCode::contract, "batch_norm epsilon must be positive");

  Tensor4<T> y(x.shape());
  Tensor4<T> x_hat(x.shape());
  std::vector<T> inv_std(C);
  for (std::size_t ch = 0; ch < C; ++ch) {
    T mean;
    T var;
    if (training) {
      T s = 0;
      for (std::size_t b = 0; b < x.n(); ++b) {
        const T* p = x.plane(b, ch);
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mean = s / static_cast<T>(count);
      T ss = 0;
      for (std::size_t b = 0; b < x.n(); ++b) {
        const T* p = x.plane(b, ch);
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / static_cast<T>(count);
      const T m = static_cast<T>(stats.momentum);
      const T unbiased = count > 1 ? ss / static_cast<T>(count - 1) : var;
      stats.running_mean[ch] = (T(1) - m) * stats.running_mean[ch] + m * mean;
      stats.running_var[ch] = (T(1) - m) * stats.running_var[ch] + m * unbiased;
    } else {
      mean = stats.running_mean[ch];
      var = std::max(stats.running_var[ch], T{0});
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(stats.eps));
    inv_std[ch] = is;
    const T g = gamma[ch];
    const T bt = beta[ch];
    for (std::size_t b = 0; b < x.n(); ++b) {
      const T* p = x.plane(b, ch);
      T* xh = x_hat.plane(b, ch);
      T* q = y.plane(b, ch);
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - mean) * is;
        q[i] = g * xh[i] + bt;
      }
    }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
  }
  return y;
}

template <Real T>
void batch_norm_backward(const Tensor4<T>& grad_y, const Tensor4<T>& gamma, const BatchNormCache<T>& cache,
                         Tensor4<T>* grad_x, Tensor4<T>* grad_gamma, Tensor4<T>* grad_beta) {
  const auto& x_hat = cache.x_hat;
  const std::size_t C = x_hat.c();
  const std::size_t hw = x_hat.shape().spatial();
  const T count = static_cast<T>(x_hat.n() * hw);
  for (std::size_t ch = 0; ch < C; ++ch) {
    T sum_dy = 0;
    T sum_dy_xh = 0;
    for (std::size_t b = 0; b < x_hat.n(); ++b) {
      const T* dy = grad_y.plane(b, ch);
      const T* xh = x_hat.plane(b, ch);
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += dy[i] * xh[i];
      }
    }
    if (grad_gamma) (*grad_gamma)[ch] += sum_dy_xh;
    if (grad_beta) (*grad_beta)[ch] += sum_dy;
    if (!grad_x) continue;
    const T scale = gamma[ch] * cache.inv_std[ch];
    for (std::size_t b = 0; b < x_hat.n(); ++b) {
      const T* dy = grad_y.plane(b, ch);
      const T* xh = x_hat.plane(b, ch);
      T* dx = grad_x->plane(b, ch);
      if (cache.training) {
        for (std::size_t i = 0; i < hw; ++i) {
          dx[i] += scale * (dy[i] - sum_dy / count - xh[i] * sum_dy_xh / count);
        }
      } else {
        for (std::size_t i = 0; i < hw; ++i) dx[i] += scale * dy[i];
      }
    }
  }
}

template <Real T>
Tensor4<T> avg_pool_grid(const Tensor4<T>& x, std::size_t g) {
  if (g == 0) throw Error(ErrorCode::contract, "grid size must be positive");
  if (g == 1) return x;
  const std::size_t ho = ceil_div(x.h(), g);
  const std::size_t wo = ceil_div(x.w(), g);
  Tensor4<T> y(x.n(), x.c(), ho, wo);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const T* p = x.plane(b, ch);
      T* q = y.plane(b, ch);
      for (std::size_t i = 0; i < ho; ++i) {
        const std::size_t y1 = std::min(x.h(), (i + 1) * g);
        for (std::size_t j = 0; j < wo; ++j) {
          const std::size_t x1 = std::min(x.w(), (j + 1) * g);
          T s = 0;
          for (std::size_t yy = i * g; yy < y1; ++yy)
            for (std::size_t xx = j * g; xx < x1; ++xx) s += p[yy * x.w() + xx];
          q[i * wo + j] = s / static_cast<T>((y1 - i * g) * (x1 - j * g));
        }
      }
    }
  }
  return y;
}

template <Real T>
void avg_pool_grid_backward(const Shape4& xs, std::size_t g, const Tensor4<T>& grad_y, Tensor4<T>& grad_x) {
  const std::size_t ho = grad_y.h();
  const std::size_t wo = grad_y.w();
  for (std::size_t b = 0; b < xs.n; ++b) {
    for (std::size_t ch = 0; ch < xs.c; ++ch) {
      const T* q = grad_y.plane(b, ch);
      T* p = grad_x.plane(b, ch);
      for (std::size_t i = 0; i < ho; ++i) {
        const std::size_t y1 = std::min(xs.h, (i + 1) * g);
        for (std::size_t j = 0; j < wo; ++j) {
          const std::size_t x1 = std::min(xs.w, (j + 1) * g);
          const T share = q[i * wo + j] / static_cast<T>((y1 - i * g) * (x1 - j * g));
          for (std::size_t yy = i * g; yy < y1; ++yy)
            for (std::size_t xx = j * g; xx < x1; ++xx) p[yy * xs.w + xx] += share;
        }
      }
    }
  }
}

template <Real T>
Matrix<T> bilinear_sample(const Tensor4<T>& x, std::span<const SamplePoint<T>> points) {
  Matrix<T> out(points.size(), x.c());
  for (std::size_t r = 0; r < points.size(); ++r) {
    const auto& pt = points[r];
    if (pt.batch >= x.n()) {
      throw Error(ErrorCode::index,
                  "sample batch index " + std::to_string(pt.batch) + " out of range for " + x.shape().str());
    }
    const auto s = make_stencil(pt.y, pt.x, x.h(), x.w());
    if (!s.any) continue;
    for (std::size_t ch = 0; ch < x.c(); ++ch) out(r, ch) = stencil_value(s, x.plane(pt.batch, ch), x.w());
  }
  return out;
}

template <Real T>
static void check_sampler_shapes(const Tensor4<T>& x, const Tensor4<T>& offsets, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::contract, "sampler stride must be positive");
  if (offsets.c() == 0 || offsets.c() % 2 != 0) {
    throw Error(ErrorCode::dimension, "offset field needs 2S channels, got " + offsets.shape().str());
  }
  if (offsets.n() != x.n() || offsets.h() != ceil_div(x.h(), stride) || offsets.w() != ceil_div(x.w(), stride)) {
    throw Error(ErrorCode::dimension, "offset field " + offsets.shape().str() + " does not cover features " +
                                          x.shape().str() + " at stride " + std::to_string(stride));
  }
}

template <Real T>
Tensor4<T> sample_offsets(const Tensor4<T>& x, const Tensor4<T>& offsets, std::size_t stride) {
  check_sampler_shapes(x, offsets, stride);
  const std::size_t S = offsets.c() / 2;
  const std::size_t C = x.c();
  const std::size_t hg = offsets.h();
  const std::size_t wg = offsets.w();
  Tensor4<T> y(x.n(), S * C, hg, wg);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t k = 0; k < S; ++k) {
      const T* dy = offsets.plane(b, 2 * k);
      const T* dx = offsets.plane(b, 2 * k + 1);
      for (std::size_t i = 0; i < hg; ++i) {
        for (std::size_t j = 0; j < wg; ++j) {
          const std::size_t cell_idx = i * wg + j;
          const T py = static_cast<T>(i * stride) + dy[cell_idx];
          const T px = static_cast<T>(j * stride) + dx[cell_idx];
          const auto s = make_stencil(py, px, x.h(), x.w());
          if (!s.any) continue;
          for (std::size_t ch = 0; ch < C; ++ch) {
            y.plane(b, k * C + ch)[cell_idx] = stencil_value(s, x.plane(b, ch), x.w());
          }
        }
      }
    }
  }
  return y;
}

template <Real T>
void sample_offsets_backward(const Tensor4<T>& x, const Tensor4<T>& offsets, std::size_t stride,
                             const Tensor4<T>& grad_y, Tensor4<T>* grad_x, Tensor4<T>* grad_offsets) {
  const std::size_t S = offsets.c() / 2;
  const std::size_t C = x.c();
  const std::size_t hg = offsets.h();
  const std::size_t wg = offsets.w();
  const std::size_t w = x.w();
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t k = 0; k < S; ++k) {
      const T* dy = offsets.plane(b, 2 * k);
      const T* dx = offsets.plane(b, 2 * k + 1);
      for (std::size_t i = 0; i < hg; ++i) {
        for (std::size_t j = 0; j < wg; ++j) {
          const std::size_t cell_idx = i * wg + j;
          const T py = static_cast<T>(i * stride) + dy[cell_idx];
          const T px = static_cast<T>(j * stride) + dx[cell_idx];
          const auto s = make_stencil(py, px, x.h(), w);
          if (!s.any) continue;
          T g_py = 0;
          T g_px = 0;
          for (std::size_t ch = 0; ch < C; ++ch) {
            const T go = grad_y.plane(b, k * C + ch)[cell_idx];
            if (go == T{0}) continue;
            if (grad_x) {
              T* gp = grad_x->plane(b, ch);
              for (int a = 0; a < 2; ++a) {
                if (!s.row_ok[a]) continue;
                for (int c2 = 0; c2 < 2; ++c2) {
                  if (!s.col_ok[c2]) continue;
                  gp[static_cast<std::size_t>(s.y0 + a) * w + static_cast<std::size_t>(s.x0 + c2)] +=
                      s.wy[a] * s.wx[c2] * go;
                }
              }
            }
            if (grad_offsets) {
              const T* p = x.plane(b, ch);
              const T v00 = cell(s, p, w, 0, 0);
              const T v01 = cell(s, p, w, 0, 1);
              const T v10 = cell(s, p, w, 1, 0);
              const T v11 = cell(s, p, w, 1, 1);
              g_py += go * (s.wx[0] * (v10 - v00) + s.wx[1] * (v11 - v01));
              g_px += go * (s.wy[0] * (v01 - v00) + s.wy[1] * (v11 - v10));
            }
          }
          if (grad_offsets) {
            grad_offsets->plane(b, 2 * k)[cell_idx] += g_py;
            grad_offsets->plane(b, 2 * k + 1)[cell_idx] += g_px;
          }
        }
      }
    }
  }
}

template <Real T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw Error(ErrorCode::dimension, "concat " + a.shape().str() + " with " + b.shape().str());
  }
  Tensor4<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t hw = a.shape().spatial();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy_n(a.batch(n), a.c() * hw, y.batch(n));
    std::copy_n(b.batch(n), b.c() * hw, y.batch(n) + a.c() * hw);
  }
  return y;
}

#define REPGRAPH_INSTANTIATE_OPS(T)                                                                               \
  template Tensor4<T> project_1x1<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>*);                    \
  template void project_1x1_backward<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>*,     \
                                        Tensor4<T>*, Tensor4<T>*);                                                \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                                           \
  template void softmax_inplace<T>(T*, std::size_t);                                                              \
  template Tensor4<T> relu<T>(const Tensor4<T>&);                                                                 \
  template Tensor4<T> batch_norm_forward<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,              \
                                            BatchNormStats<T>&, bool, BatchNormCache<T>*);                        \
  template void batch_norm_backward<T>(const Tensor4<T>&, const Tensor4<T>&, const BatchNormCache<T>&,           \
                                       Tensor4<T>*, Tensor4<T>*, Tensor4<T>*);                                    \
  template Tensor4<T> avg_pool_grid<T>(const Tensor4<T>&, std::size_t);                                           \
  template void avg_pool_grid_backward<T>(const Shape4&, std::size_t, const Tensor4<T>&, Tensor4<T>&);            \
  template Matrix<T> bilinear_sample<T>(const Tensor4<T>&, std::span<const SamplePoint<T>>);                      \
  template Tensor4<T> sample_offsets<T>(const Tensor4<T>&, const Tensor4<T>&, std::size_t);                       \
  template void sample_offsets_backward<T>(const Tensor4<T>&, const Tensor4<T>&, std::size_t, const Tensor4<T>&,  \
                                           Tensor4<T>*, Tensor4<T>*);                                             \
  template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);

REPGRAPH_INSTANTIATE_OPS(float)
REPGRAPH_INSTANTIATE_OPS(double)

}  // namespace repgraph
