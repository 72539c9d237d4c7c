#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "repgraph/layer_config.hpp"

namespace repgraph {

struct BenchConfig {
  std::vector<std::string> blocks;  // nl, srg, brg, grid, group, noop
  std::vector<std::pair<std::size_t, std::size_t>> geometries;  // (h, w)
  std::size_t channels = 256;
  std::size_t inner = 64;
  std::size_t nodes = 9;
  std::size_t grid_size = 2;
  std::size_t groups = 4;
  Fusion fusion = Fusion::sum;
  std::string dtype = "f32";
  std::size_t repeats = 5;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;
  std::size_t memory_budget_mb = 2048;
};

struct BenchResult {
  std::string block;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t channels = 0;
  std::size_t inner = 0;
  std::size_t nodes = 0;
  std::string dtype;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  double median_ms = 0;
  double iqr_ms = 0;
  bool skipped = false;
  std::string reason;
};

struct TimingSummary {
  double median_ms = 0;
  double iqr_ms = 0;
  std::vector<double> samples_ms;
};

// Runs fn warmup times untimed, then repeats timed calls.
TimingSummary time_repeated(const std::function<void()>& fn, std::size_t repeats, std::size_t warmup);

// Median and interquartile range with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q);

// Peak working-set estimate in bytes of one forward pass.
std::uint64_t estimate_forward_bytes(const std::string& block, std::size_t h, std::size_t w, const BenchConfig& cfg);

// Identical inputs across blocks at each geometry (drawn from cfg.seed).
// Geometries over the memory budget produce skipped rows.
std::vector<BenchResult> run_benchmark(const BenchConfig& cfg);

// `block,h,w,c,cp,s,dtype,median_ms,iqr_ms,repeats`; skipped rows become
// `# skipped ...` comment lines.
void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& results);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace repgraph
