#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "repgraph/tensor.hpp"

namespace repgraph {

// Seeded generator with platform-independent output. std::mt19937_64 is fully
// specified by the standard; the distributions are not, so the real-valued
// conversions are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return engine_();
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next_u64() % bound; }

  // Box-Muller; consumes two draws per call.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <Real T>
  Tensor4<T> uniform_tensor(Shape4 shape, double lo, double hi) {
    Tensor4<T> t(shape);
    for (auto& v : t.data()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
};

// Weight init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <Real T>
Tensor4<T> fan_in_uniform(Shape4 shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  return rng.uniform_tensor<T>(shape, -bound, bound);
}

}  // namespace repgraph
