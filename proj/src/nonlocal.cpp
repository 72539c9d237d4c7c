#include "repgraph/nonlocal.hpp"

#include "repgraph/attention.hpp"
#include "repgraph/graph_ops.hpp"
#include "repgraph/linalg.hpp"

namespace repgraph {

template <Real T>
NonLocalParams<T> NonLocalParams<T>::create(const NonLocalConfig& cfg) {
  if (cfg.channels == 0 || cfg.inner == 0) throw Error(ErrorCode::config, "non-local widths must be positive");
  if (cfg.init_mode == InitMode::pretrained_insert && cfg.fusion == Fusion::concat) {
    throw Error(ErrorCode::config, "pretrained_insert needs the residual sum fusion");
  }
  NonLocalParams<T> p{cfg, {}};
  Rng rng(cfg.seed);
  add_projection(p.params, "theta", cfg.inner, cfg.channels, rng);
  add_projection(p.params, "phi", cfg.inner, cfg.channels, rng);
  add_projection(p.params, "g", cfg.inner, cfg.channels, rng);
  const std::size_t out_in = cfg.fusion == Fusion::sum ? cfg.inner : cfg.inner + cfg.channels;
  add_projection(p.params, "out", cfg.channels, out_in, rng);
  if (cfg.init_mode == InitMode::pretrained_insert) p.params.at("out.weight").fill(T{0});
  return p;
}

template <Real T>
Var<T> aggregate(Var<T> x_tilde, Var<T> x, Fusion fusion, const std::function<Var<T>(Var<T>)>& project_back) {
  if (fusion == Fusion::sum) return ag::add(project_back(x_tilde), x);
  return project_back(ag::concat_channels(x_tilde, x));
}

template <Real T>
Var<T> nonlocal_block(Var<T> x, const BoundParams<T>& p, const NonLocalConfig& cfg) {
  if (x.shape().c != cfg.channels) {
    throw Error(ErrorCode::dimension, "non-local block expects C=" + std::to_string(cfg.channels) + ", input is " +
                                          x.shape().str());
  }
  const Var<T> q = ag::project(x, p["theta.weight"], p.maybe("theta.bias"));
  const Var<T> k = ag::project(x, p["phi.weight"], p.maybe("phi.bias"));
  const Var<T> v = ag::project(x, p["g.weight"], p.maybe("g.bias"));
  const Var<T> x_tilde = ag::dense_attention(q, k, v);
  return aggregate<T>(x_tilde, x, cfg.fusion,
                      [&p](Var<T> t) { return ag::project(t, p["out.weight"], p.maybe("out.bias")); });
}

template <Real T>
Tensor4<T> nonlocal_forward(const Tensor4<T>& x, const NonLocalParams<T>& p) {
  Tape<T> tape(false);
  const auto bound = bind(tape, p.params, false);
  return nonlocal_block(tape.constant(x), bound, p.config).value();
}

template <Real T>
Matrix<T> nonlocal_affinity(const Tensor4<T>& x, const NonLocalParams<T>& p, std::size_t batch) {
  if (batch >= x.n()) throw Error(ErrorCode::index, "batch " + std::to_string(batch) + " out of range");
  Tensor4<T> one(Shape4{1, x.c(), x.h(), x.w()},
                 std::vector<T>(x.batch(batch), x.batch(batch) + x.c() * x.shape().spatial()));
  const auto& P = p.params;
  const Tensor4<T> q = project_1x1(one, P.at("theta.weight"), &P.at("theta.bias"));
  const Tensor4<T> k = project_1x1(one, P.at("phi.weight"), &P.at("phi.bias"));
  return affinity_matrix(reshape_nodes(q), reshape_nodes(k));
}

#define REPGRAPH_INSTANTIATE_NL(T)                                                                           \
  template struct NonLocalParams<T>;                                                                         \
  template Var<T> aggregate<T>(Var<T>, Var<T>, Fusion, const std::function<Var<T>(Var<T>)>&);                \
  template Var<T> nonlocal_block<T>(Var<T>, const BoundParams<T>&, const NonLocalConfig&);                   \
  template Tensor4<T> nonlocal_forward<T>(const Tensor4<T>&, const NonLocalParams<T>&);                      \
  template Matrix<T> nonlocal_affinity<T>(const Tensor4<T>&, const NonLocalParams<T>&, std::size_t);

REPGRAPH_INSTANTIATE_NL(float)
REPGRAPH_INSTANTIATE_NL(double)

}  // namespace repgraph
