#include "repgraph/bench.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <cmath>
#include <ostream>

#include "repgraph/error.hpp"
#include "repgraph/nonlocal.hpp"
#include "repgraph/repgraph.hpp"
#include "repgraph/rng.hpp"

namespace repgraph {
namespace {

bool known_block(const std::string& b) {
  return b == "nl" || b == "srg" || b == "brg" || b == "grid" || b == "group" || b == "noop";
}

LayerConfig layer_for(const std::string& block, const BenchConfig& cfg) {
  LayerConfig lc;
  lc.variant = block == "brg" ? Variant::bottleneck : Variant::simple;
  lc.nodes = cfg.nodes;
  lc.channels = cfg.channels;
  lc.inner = cfg.inner;
  lc.fusion = cfg.fusion;
  lc.seed = cfg.seed + 1;
  if (block == "grid") lc.grid_size = cfg.grid_size;
  if (block == "group") lc.groups = cfg.groups;
  return lc;
}

template <Real T>
std::function<void()> make_runner(const std::string& block, const Tensor4<T>& x, const BenchConfig& cfg) {
  if (block == "noop") {
    return [] {};
  }
  if (block == "nl") {
    auto params = std::make_shared<NonLocalParams<T>>(
        NonLocalParams<T>::create(NonLocalConfig{cfg.channels, cfg.inner, cfg.fusion, InitMode::fresh, cfg.seed + 1}));
    return [params, &x] { (void)nonlocal_forward(x, *params); };
  }
  auto layer = std::make_shared<RepGraphLayer<T>>(layer_for(block, cfg));
  return [layer, &x] { (void)layer->forward(x); };
}

template <Real T>
void bench_geometry(const BenchConfig& cfg, std::size_t h, std::size_t w, std::vector<BenchResult>& out) {
  Rng rng(cfg.seed);
  const Tensor4<T> x = rng.uniform_tensor<T>(Shape4{1, cfg.channels, h, w}, -1.0, 1.0);
  for (const auto& block : cfg.blocks) {
    BenchResult r;
    r.block = block;
    r.h = h;
    r.w = w;
    r.channels = cfg.channels;
    r.inner = cfg.inner;
    r.nodes = block == "nl" ? h * w : cfg.nodes;
    r.dtype = cfg.dtype;
    r.repeats = cfg.repeats;
    r.warmup = cfg.warmup;
    const std::uint64_t bytes = estimate_forward_bytes(block, h, w, cfg);
    if (bytes > std::uint64_t(cfg.memory_budget_mb) << 20) {
      r.skipped = true;
      r.reason = "estimated " + std::to_string(bytes >> 20) + " MiB exceeds budget of " +
                 std::to_string(cfg.memory_budget_mb) + " MiB";
      out.push_back(r);
      continue;
    }
    const TimingSummary t = time_repeated(make_runner<T>(block, x, cfg), cfg.repeats, cfg.warmup);
    r.median_ms = t.median_ms;
    r.iqr_ms = t.iqr_ms;
    out.push_back(r);
  }
}

}  // namespace

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(ErrorCode::contract, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

TimingSummary time_repeated(const std::function<void()>& fn, std::size_t repeats, std::size_t warmup) {
  if (repeats < 5) throw Error(ErrorCode::contract, "repeats must be >= 5, got " + std::to_string(repeats));
  if (warmup < 2) throw Error(ErrorCode::contract, "warmup must be >= 2, got " + std::to_string(warmup));
  for (std::size_t i = 0; i < warmup; ++i) fn();
  TimingSummary s;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    s.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  s.median_ms = quantile(s.samples_ms, 0.5);
  s.iqr_ms = quantile(s.samples_ms, 0.75) - quantile(s.samples_ms, 0.25);
  return s;
}

std::uint64_t estimate_forward_bytes(const std::string& block, std::size_t h, std::size_t w, const BenchConfig& cfg) {
  const std::uint64_t N = std::uint64_t(h) * w;
  const std::uint64_t elem = cfg.dtype == "f64" ? 8 : 4;
  const std::uint64_t C = cfg.channels;
  const std::uint64_t Cp = cfg.inner;
  const std::uint64_t S = cfg.nodes;
  if (block == "noop") return 0;
  if (block == "nl") {
    // Query blocks of 64 columns keep the affinity strip at 64 N.
    return elem * N * (2 * C + 4 * Cp + 64);
  }
  return elem * N * (2 * C + 4 * Cp + 2 * S * Cp + 4 * S);
}

std::vector<BenchResult> run_benchmark(const BenchConfig& cfg) {
  if (cfg.blocks.empty() || cfg.geometries.empty()) {
    throw Error(ErrorCode::contract, "benchmark needs at least one block and one geometry");
  }
  for (const auto& b : cfg.blocks) {
    if (!known_block(b)) throw Error(ErrorCode::config, "unknown block label '" + b + "'");
  }
  for (const auto& [h, w] : cfg.geometries) {
    if (h == 0 || w == 0) throw Error(ErrorCode::contract, "geometry fields must be positive");
  }
  if (cfg.dtype != "f32" && cfg.dtype != "f64") throw Error(ErrorCode::config, "dtype must be f32 or f64");
  if (cfg.repeats < 5) throw Error(ErrorCode::contract, "repeats must be >= 5, got " + std::to_string(cfg.repeats));
  if (cfg.warmup < 2) throw Error(ErrorCode::contract, "warmup must be >= 2, got " + std::to_string(cfg.warmup));
  std::vector<BenchResult> out;
  for (const auto& [h, w] : cfg.geometries) {
    if (cfg.dtype == "f32") bench_geometry<float>(cfg, h, w, out);
    else bench_geometry<double>(cfg, h, w, out);
  }
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& results) {
  os << "block,h,w,c,cp,s,dtype,median_ms,iqr_ms,repeats\n";
  os.precision(6);
  for (const auto& r : results) {
    if (r.skipped) {
      os << "# skipped " << r.block << ' ' << r.h << 'x' << r.w << ": " << r.reason << '\n';
      continue;
    }
    os << r.block << ',' << r.h << ',' << r.w << ',' << r.channels << ',' << r.inner << ',' << r.nodes << ','
       << r.dtype << ',' << std::fixed << r.median_ms << ',' << r.iqr_ms << std::defaultfloat << ',' << r.repeats
       << '\n';
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::contract, "slope fit needs >= 2 paired points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw Error(ErrorCode::contract, "log-log fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw Error(ErrorCode::contract, "slope fit needs distinct x values");
  return sxy / sxx;
}

}  // namespace repgraph
