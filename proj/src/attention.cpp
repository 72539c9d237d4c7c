#include "repgraph/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "repgraph/error.hpp"
#include "repgraph/linalg.hpp"
#include "repgraph/ops.hpp"

namespace repgraph {
namespace {

constexpr std::size_t kQueryBlock = 64;

// Column-wise softmax of an [rows x cols] block (each column is one query).
template <Real T>
void softmax_columns(T* m, std::size_t rows, std::size_t cols) {
  std::vector<T> mx(cols, -std::numeric_limits<T>::infinity());
  std::vector<T> sum(cols, T{0});
  for (std::size_t j = 0; j < rows; ++j) {
    const T* r = m + j * cols;
    for (std::size_t i = 0; i < cols; ++i) mx[i] = std::max(mx[i], r[i]);
  }
  for (std::size_t j = 0; j < rows; ++j) {
    T* r = m + j * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      r[i] = std::exp(r[i] - mx[i]);
      sum[i] += r[i];
    }
  }
  for (auto& s : sum) s = T(1) / s;
  for (std::size_t j = 0; j < rows; ++j) {
    T* r = m + j * cols;
    for (std::size_t i = 0; i < cols; ++i) r[i] *= sum[i];
  }
}

template <Real T>
void check_dense(const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v) {
  if (!(q.shape() == k.shape())) {
    throw Error(ErrorCode::dimension, "query " + q.shape().str() + " and key " + k.shape().str() + " differ");
  }
  if (v.n() != q.n() || v.h() != q.h() || v.w() != q.w()) {
    throw Error(ErrorCode::dimension, "value " + v.shape().str() + " does not match query " + q.shape().str());
  }
}

}  // namespace

template <Real T>
Matrix<T> affinity_matrix(const Matrix<T>& x_theta, const Matrix<T>& x_phi) {
  if (x_theta.cols() != x_phi.cols()) {
    throw Error(ErrorCode::dimension, "affinity of " + x_theta.shape_str() + " and " + x_phi.shape_str());
  }
  const std::size_t n = x_theta.rows();
  const std::size_t m = x_phi.rows();
  const std::size_t c = x_theta.cols();
  std::vector<T> phi_t(c * m);
  transpose_into(m, c, x_phi.data().data(), c, phi_t.data(), m);
  Matrix<T> logits(n, m);
  gemm(n, c, m, x_theta.data().data(), c, phi_t.data(), m, logits.data().data(), m, false);
  return softmax_rows(logits);
}

template <Real T>
Tensor4<T> dense_attention(const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v,
                           Tensor4<T>* saved_affinity_t) {
  check_dense(q, k, v);
  const std::size_t N = q.shape().spatial();
  const std::size_t cq = q.c();
  const std::size_t cv = v.c();
  Tensor4<T> out(v.shape());
  if (saved_affinity_t) *saved_affinity_t = Tensor4<T>(q.n(), 1, N, N);

  const std::size_t block = saved_affinity_t ? N : std::min(N, kQueryBlock);
  std::vector<T> k_t(N * cq);
  std::vector<T> logits_t(N * block);
  for (std::size_t b = 0; b < q.n(); ++b) {
    transpose_into(cq, N, k.batch(b), N, k_t.data(), cq);
    for (std::size_t i0 = 0; i0 < N; i0 += block) {
      const std::size_t bw = std::min(block, N - i0);
      // logits_t[j][i] = k(:, j) . q(:, i0 + i)
      gemm(N, cq, bw, k_t.data(), cq, q.batch(b) + i0, N, logits_t.data(), bw, false);
      softmax_columns(logits_t.data(), N, bw);
      gemm(cv, N, bw, v.batch(b), N, logits_t.data(), bw, out.batch(b) + i0, N, false);
      if (saved_affinity_t) std::copy_n(logits_t.data(), N * N, saved_affinity_t->batch(b));
    }
  }
  return out;
}

template <Real T>
void dense_attention_backward(const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v,
                              const Tensor4<T>& affinity_t, const Tensor4<T>& grad_out, Tensor4<T>* grad_q,
                              Tensor4<T>* grad_k, Tensor4<T>* grad_v) {
  const std::size_t N = q.shape().spatial();
  const std::size_t cq = q.c();
  const std::size_t cv = v.c();
  std::vector<T> p(N * N);
  std::vector<T> v_t(N * cv);
  std::vector<T> dp_t(N * N);
  std::vector<T> dl(N * N);
  for (std::size_t b = 0; b < q.n(); ++b) {
    const T* pt = affinity_t.batch(b);
    const T* go = grad_out.batch(b);
    if (grad_v) {
      transpose_into(N, N, pt, N, p.data(), N);
      gemm(cv, N, N, go, N, p.data(), N, grad_v->batch(b), N, true);
    }
    if (!grad_q && !grad_k) continue;
    transpose_into(cv, N, v.batch(b), N, v_t.data(), cv);
    gemm(N, cv, N, v_t.data(), cv, go, N, dp_t.data(), N, false);
    // Softmax backward, column-wise: dl = p * (dp - sum_j p dp).
    std::vector<T> dot(N, T{0});
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < N; ++i) dot[i] += pt[j * N + i] * dp_t[j * N + i];
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < N; ++i) dp_t[j * N + i] = pt[j * N + i] * (dp_t[j * N + i] - dot[i]);
    if (grad_q) gemm(cq, N, N, k.batch(b), N, dp_t.data(), N, grad_q->batch(b), N, true);
    if (grad_k) {
      transpose_into(N, N, dp_t.data(), N, dl.data(), N);
      gemm(cq, N, N, q.batch(b), N, dl.data(), N, grad_k->batch(b), N, true);
    }
  }
}

namespace {

struct SparseGeometry {
  std::size_t S, cq, cv, groups, gq, gv, hg, wg, stride;
};

template <Real T>
SparseGeometry check_sparse(const Tensor4<T>& q, const Tensor4<T>& keys, const Tensor4<T>& values,
                            std::size_t stride, std::size_t groups) {
  if (stride == 0) throw Error(ErrorCode::contract, "stride must be positive");
  if (groups == 0) throw Error(ErrorCode::contract, "groups must be positive");
  const std::size_t cq = q.c();
  if (cq == 0 || keys.c() % cq != 0) {
    throw Error(ErrorCode::dimension, "key set " + keys.shape().str() + " is not S x " + std::to_string(cq));
  }
  const std::size_t S = keys.c() / cq;
  if (S == 0 || values.c() % S != 0) {
    throw Error(ErrorCode::dimension, "value set " + values.shape().str() + " does not hold S=" + std::to_string(S) +
                                          " samples");
  }
  const std::size_t cv = values.c() / S;
  const std::size_t hg = (q.h() + stride - 1) / stride;
  const std::size_t wg = (q.w() + stride - 1) / stride;
  if (keys.n() != q.n() || values.n() != q.n() || keys.h() != hg || keys.w() != wg || values.h() != hg ||
      values.w() != wg) {
    throw Error(ErrorCode::dimension, "sample sets " + keys.shape().str() + " / " + values.shape().str() +
                                          " do not cover query " + q.shape().str());
  }
  if (cq % groups != 0 || cv % groups != 0) {
    throw Error(ErrorCode::contract, "channels (" + std::to_string(cq) + ", " + std::to_string(cv) +
                                         ") not divisible by groups G=" + std::to_string(groups));
  }
  return SparseGeometry{S, cq, cv, groups, cq / groups, cv / groups, hg, wg, stride};
}

}  // namespace

template <Real T>
Tensor4<T> sparse_attention(const Tensor4<T>& q, const Tensor4<T>& keys, const Tensor4<T>& values,
                            std::size_t stride, std::size_t groups, Tensor4<T>* weights) {
  const auto g = check_sparse(q, keys, values, stride, groups);
  const std::size_t H = q.h();
  const std::size_t W = q.w();
  const std::size_t hw = H * W;
  const std::size_t cells = g.hg * g.wg;
  Tensor4<T> out(q.n(), g.cv, H, W);
  if (weights) *weights = Tensor4<T>(q.n(), g.groups, hw, g.S);
  std::vector<T> wrow(g.S);
  for (std::size_t b = 0; b < q.n(); ++b) {
    const T* qb = q.batch(b);
    const T* kb = keys.batch(b);
    const T* vb = values.batch(b);
    T* ob = out.batch(b);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t pos = i * W + j;
        const std::size_t cell = (i / g.stride) * g.wg + j / g.stride;
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          for (std::size_t s = 0; s < g.S; ++s) {
            T acc = 0;
            for (std::size_t c = grp * g.gq; c < (grp + 1) * g.gq; ++c) {
              acc += qb[c * hw + pos] * kb[(s * g.cq + c) * cells + cell];
            }
            wrow[s] = acc;
          }
          softmax_inplace(wrow.data(), g.S);
          for (std::size_t c = grp * g.gv; c < (grp + 1) * g.gv; ++c) {
            T acc = 0;
            for (std::size_t s = 0; s < g.S; ++s) acc += wrow[s] * vb[(s * g.cv + c) * cells + cell];
            ob[c * hw + pos] = acc;
          }
          if (weights) std::copy(wrow.begin(), wrow.end(), weights->plane(b, grp) + pos * g.S);
        }
      }
    }
  }
  return out;
}

template <Real T>
void sparse_attention_backward(const Tensor4<T>& q, const Tensor4<T>& keys, const Tensor4<T>& values,
                               std::size_t stride, std::size_t groups, const Tensor4<T>& weights,
                               const Tensor4<T>& grad_out, Tensor4<T>* grad_q, Tensor4<T>* grad_keys,
                               Tensor4<T>* grad_values) {
  const auto g = check_sparse(q, keys, values, stride, groups);
  const std::size_t H = q.h();
  const std::size_t W = q.w();
  const std::size_t hw = H * W;
  const std::size_t cells = g.hg * g.wg;
  std::vector<T> dw(g.S);
  for (std::size_t b = 0; b < q.n(); ++b) {
    const T* qb = q.batch(b);
    const T* kb = keys.batch(b);
    const T* vb = values.batch(b);
    const T* gob = grad_out.batch(b);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t pos = i * W + j;
        const std::size_t cell = (i / g.stride) * g.wg + j / g.stride;
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          const T* w = weights.plane(b, grp) + pos * g.S;
          T dot = 0;
          for (std::size_t s = 0; s < g.S; ++s) {
            T acc = 0;
            for (std::size_t c = grp * g.gv; c < (grp + 1) * g.gv; ++c) {
              const T go = gob[c * hw + pos];
              acc += go * vb[(s * g.cv + c) * cells + cell];
              if (grad_values) grad_values->batch(b)[(s * g.cv + c) * cells + cell] += w[s] * go;
            }
            dw[s] = acc;
            dot += w[s] * acc;
          }
          for (std::size_t s = 0; s < g.S; ++s) {
            const T dl = w[s] * (dw[s] - dot);
            for (std::size_t c = grp * g.gq; c < (grp + 1) * g.gq; ++c) {
              const std::size_t kidx = (s * g.cq + c) * cells + cell;
              if (grad_q) grad_q->batch(b)[c * hw + pos] += dl * kb[kidx];
              if (grad_keys) grad_keys->batch(b)[kidx] += dl * qb[c * hw + pos];
            }
          }
        }
      }
    }
  }
}

#define REPGRAPH_INSTANTIATE_ATTENTION(T)                                                                        \
  template Matrix<T> affinity_matrix<T>(const Matrix<T>&, const Matrix<T>&);                                     \
  template Tensor4<T> dense_attention<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>*); \
  template void dense_attention_backward<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,            \
                                            const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>*, Tensor4<T>*,     \
                                            Tensor4<T>*);                                                        \
  template Tensor4<T> sparse_attention<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&, std::size_t,  \
                                          std::size_t, Tensor4<T>*);                                             \
  template void sparse_attention_backward<T>(const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&,           \
                                             std::size_t, std::size_t, const Tensor4<T>&, const Tensor4<T>&,     \
                                             Tensor4<T>*, Tensor4<T>*, Tensor4<T>*);

REPGRAPH_INSTANTIATE_ATTENTION(float)
REPGRAPH_INSTANTIATE_ATTENTION(double)

}  // namespace repgraph
