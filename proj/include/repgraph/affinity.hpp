#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "repgraph/repgraph.hpp"
#include "repgraph/tensor.hpp"

namespace repgraph {

struct HistogramSpec {
  double lowest_edge = 1e-6;  // everything below lands in an underflow bin [0, lowest_edge)
  std::size_t log_bins = 24;  // log-spaced bins between lowest_edge and 1
};

struct AffinityStats {
  std::vector<double> bin_edges;          // log_bins + 2 edges, first is 0
  std::vector<std::uint64_t> counts;      // log_bins + 1 counts
  std::vector<std::vector<double>> topk;  // topk[row][k-1] = mass of the k largest entries
  std::vector<double> imbalance;          // normalized Gini coefficient per row
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string source;

  double mean_imbalance() const;
};

// Rows must be probability distributions: entries >= -1e-6 and row sums
// within 1e-6 of 1, otherwise Error(validation).
template <Real T>
AffinityStats affinity_stats(const Matrix<T>& rows, const std::string& source = "", const HistogramSpec& spec = {});

// Normalized Gini coefficient of one row: 0 for uniform, 1 for one-hot.
double gini_imbalance(std::vector<double> row);

// Sparse weights (n, G, hw, S) flattened to (n*G*hw) x S.
template <Real T>
Matrix<T> weights_matrix(const AttentionWeights<T>& w);

void write_histogram_csv(std::ostream& os, const AffinityStats& stats);
void write_topk_csv(std::ostream& os, const AffinityStats& stats);

}  // namespace repgraph
