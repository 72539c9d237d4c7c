#include "repgraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "repgraph/error.hpp"

namespace repgraph {

double GradCheckReport::worst() const {
  double w = 0;
  for (double e : max_rel_error) w = std::max(w, e);
  return w;
}

namespace {

template <Real T>
double evaluate(const GraphFn<T>& f, const std::vector<Tensor4<T>>& inputs) {
  Tape<T> tape(false);
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& x : inputs) vars.push_back(tape.leaf(x, false));
  const Var<T> out = f(tape, vars);
  if (out.value().numel() != 1) throw Error(ErrorCode::contract, "gradient check function must return a scalar");
  return static_cast<double>(out.value()[0]);
}

}  // namespace

template <Real T>
GradCheckReport gradient_check(const GraphFn<T>& f, std::vector<Tensor4<T>> inputs, double eps, double tolerance) {
  if (!(eps > 0)) throw Error(ErrorCode::contract, "finite-difference step must be positive");
  GradCheckReport report;
  report.eps = eps;
  report.tolerance = tolerance;
  report.max_rel_error.assign(inputs.size(), 0.0);

  Tape<T> tape(true);
  std::vector<Var<T>> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x, true));
  const Var<T> loss = f(tape, vars);
  if (!std::isfinite(static_cast<double>(loss.value()[0]))) {
    report.failure = "non-finite function value at the unperturbed point";
    return report;
  }
  const Gradients<T> grads = tape.backward(loss);

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor4<T>& analytic = grads[vars[k]];
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const T orig = inputs[k][i];
      inputs[k][i] = static_cast<T>(orig + eps);
      const double fp = evaluate(f, inputs);
      inputs[k][i] = static_cast<T>(orig - eps);
      const double fm = evaluate(f, inputs);
      inputs[k][i] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      const double a = static_cast<double>(analytic[i]);
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.failure = "non-finite gradient at input " + std::to_string(k) + ", index " + std::to_string(i);
        report.passed = false;
        return report;
      }
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      report.max_rel_error[k] = std::max(report.max_rel_error[k], rel);
    }
  }
  report.passed = report.worst() < tolerance;
  return report;
}

template <Real T>
GradCheckReport finite_diff_check(const std::function<Var<T>(Var<T>)>& f, const Tensor4<T>& x, double eps,
                                  double tolerance) {
  GraphFn<T> g = [&f](Tape<T>&, std::span<const Var<T>> v) { return f(v[0]); };
  return gradient_check<T>(g, {x}, eps, tolerance);
}

template GradCheckReport gradient_check<float>(const GraphFn<float>&, std::vector<Tensor4<float>>, double, double);
template GradCheckReport gradient_check<double>(const GraphFn<double>&, std::vector<Tensor4<double>>, double, double);
template GradCheckReport finite_diff_check<float>(const std::function<Var<float>(Var<float>)>&, const Tensor4<float>&,
                                                  double, double);
template GradCheckReport finite_diff_check<double>(const std::function<Var<double>(Var<double>)>&,
                                                   const Tensor4<double>&, double, double);

}  // namespace repgraph
