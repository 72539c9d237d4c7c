#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "repgraph/repgraph.hpp"

namespace repgraph {

struct GradSuiteRow {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0;
  bool passed = false;
  std::string detail;
};

// Central-difference check of every differentiable op and of the full
// layer variants in f64. Sampling positions are kept at least 0.1 away
// from integer coordinates, where bilinear interpolation has kinks.
std::vector<GradSuiteRow> run_gradient_suite(const std::vector<std::uint64_t>& seeds, double eps = 1e-6,
                                             double tolerance = 1e-5);

std::vector<std::string> gradient_suite_names();

void write_gradient_csv(std::ostream& os, const std::vector<GradSuiteRow>& rows);

// Offsets that place sample k of every query on grid node k (row-major),
// so S = h*w samples cover the whole map.
template <Real T>
Tensor4<T> full_grid_offsets(std::size_t n, std::size_t h, std::size_t w);

struct OracleResult {
  std::size_t h = 0;
  std::size_t w = 0;
  double max_abs_diff = 0;
  double seconds = 0;
};

// Simple layer with full-grid offsets against the non-local block sharing
// its weights, in f64.
OracleResult run_dense_oracle(std::size_t h, std::size_t w, std::size_t channels, std::size_t inner,
                              std::uint64_t seed, Fusion fusion = Fusion::sum);

// Smallest distance from a sampling coordinate (anchor + offset) to an integer.
template <Real T>
double min_integer_distance(const Tensor4<T>& offsets);

}  // namespace repgraph
