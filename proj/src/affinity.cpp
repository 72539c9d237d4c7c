#include "repgraph/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include "repgraph/error.hpp"

namespace repgraph {

double AffinityStats::mean_imbalance() const {
  if (imbalance.empty()) return 0.0;
  return std::accumulate(imbalance.begin(), imbalance.end(), 0.0) / static_cast<double>(imbalance.size());
}

double gini_imbalance(std::vector<double> row) {
  const std::size_t n = row.size();
  if (n <= 1) return 0.0;
  std::sort(row.begin(), row.end());
  const double total = std::accumulate(row.begin(), row.end(), 0.0);
  if (total <= 0) return 0.0;
  // Pairing the i-th smallest with the i-th largest makes uniform rows
  // cancel to exactly 0 and one-hot rows reduce to exactly (n-1)/(n-1).
  double acc = 0;
  for (std::size_t i = 1; i <= n / 2; ++i) {
    acc += static_cast<double>(n + 1 - 2 * i) * (row[n - i] - row[i - 1]);
  }
  return acc / (static_cast<double>(n - 1) * total);
}

template <Real T>
AffinityStats affinity_stats(const Matrix<T>& m, const std::string& source, const HistogramSpec& spec) {
  if (m.rows() == 0 || m.cols() == 0) throw Error(ErrorCode::validation, "affinity matrix is empty");
  if (!(spec.lowest_edge > 0 && spec.lowest_edge < 1) || spec.log_bins == 0) {
    throw Error(ErrorCode::contract, "histogram needs 0 < lowest_edge < 1 and at least one bin");
  }
  AffinityStats st;
  st.rows = m.rows();
  st.cols = m.cols();
  st.source = source;

  st.bin_edges.push_back(0.0);
  const double log_lo = std::log10(spec.lowest_edge);
  for (std::size_t b = 0; b <= spec.log_bins; ++b) {
    st.bin_edges.push_back(std::pow(10.0, log_lo * (1.0 - static_cast<double>(b) / spec.log_bins)));
  }
  st.bin_edges.back() = 1.0;
  st.counts.assign(spec.log_bins + 1, 0);

  std::vector<double> row(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      row[c] = static_cast<double>(m(r, c));
      if (!(row[c] >= -1e-6)) {
        throw Error(ErrorCode::validation, "row " + std::to_string(r) + " has entry " + std::to_string(row[c]));
      }
      sum += row[c];
    }
    if (!(std::abs(sum - 1.0) <= 1e-6)) {
      throw Error(ErrorCode::validation, "row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
    for (double v : row) {
      const auto it = std::upper_bound(st.bin_edges.begin() + 1, st.bin_edges.end() - 1, v);
      ++st.counts[static_cast<std::size_t>(it - st.bin_edges.begin()) - 1];
    }
    st.imbalance.push_back(gini_imbalance(row));

    std::sort(row.begin(), row.end(), std::greater<>());
    std::vector<double> curve(row.size());
    std::partial_sum(row.begin(), row.end(), curve.begin());
    const double total = curve.back();
    for (double& v : curve) v /= total;
    st.topk.push_back(std::move(curve));
  }
  return st;
}

template <Real T>
Matrix<T> weights_matrix(const AttentionWeights<T>& w) {
  const std::size_t S = w.weights.w();
  const std::size_t rows = w.weights.numel() / std::max<std::size_t>(S, 1);
  Matrix<T> m(rows, S);
  std::copy(w.weights.data().begin(), w.weights.data().end(), m.data().begin());
  return m;
}

void write_histogram_csv(std::ostream& os, const AffinityStats& stats) {
  os << "bin_lo,bin_hi,count\n";
  os.precision(9);
  for (std::size_t b = 0; b < stats.counts.size(); ++b) {
    os << stats.bin_edges[b] << ',' << stats.bin_edges[b + 1] << ',' << stats.counts[b] << '\n';
  }
}

void write_topk_csv(std::ostream& os, const AffinityStats& stats) {
  os << "row,k,mass\n";
  os.precision(12);
  for (std::size_t r = 0; r < stats.topk.size(); ++r) {
    for (std::size_t k = 0; k < stats.topk[r].size(); ++k) os << r << ',' << k + 1 << ',' << stats.topk[r][k] << '\n';
  }
}

template AffinityStats affinity_stats<float>(const Matrix<float>&, const std::string&, const HistogramSpec&);
template AffinityStats affinity_stats<double>(const Matrix<double>&, const std::string&, const HistogramSpec&);
template Matrix<float> weights_matrix<float>(const AttentionWeights<float>&);
template Matrix<double> weights_matrix<double>(const AttentionWeights<double>&);

}  // namespace repgraph
