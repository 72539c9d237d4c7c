#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "repgraph/autograd.hpp"

namespace repgraph {

struct GradCheckReport {
  // Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|), per input.
  std::vector<double> max_rel_error;
  double eps = 0;
  double tolerance = 0;
  bool passed = false;
  std::string failure;  // set when a value was non-finite

  double worst() const;
};

// Builds a scalar from leaf inputs on the given tape.
template <Real T>
using GraphFn = std::function<Var<T>(Tape<T>&, std::span<const Var<T>>)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps on every
// coordinate of every input, compared against Tape::backward.
template <Real T>
GradCheckReport gradient_check(const GraphFn<T>& f, std::vector<Tensor4<T>> inputs, double eps, double tolerance);

template <Real T>
GradCheckReport finite_diff_check(const std::function<Var<T>(Var<T>)>& f, const Tensor4<T>& x, double eps,
                                  double tolerance = 1e-5);

}  // namespace repgraph
