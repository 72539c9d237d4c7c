// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "repgraph/affinity.hpp"
#include "repgraph/bench.hpp"
#include "repgraph/flops.hpp"
#include "repgraph/suites.hpp"
#include "repgraph/toy_train.hpp"
#include "repgraph/variants.hpp"

using namespace repgraph;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

LayerConfig fuzz_config(Rng& rng, Variant v) {
  LayerConfig cfg;
  cfg.variant = v;
  cfg.channels = 2 + rng.below(7);
  cfg.inner = 1 + rng.below(6);
  cfg.nodes = 1 + rng.below(12);
  cfg.fusion = rng.below(2) == 0 ? Fusion::sum : Fusion::concat;
  cfg.offset_source = rng.below(2) == 0 ? OffsetSource::input : OffsetSource::query;
  cfg.bottleneck_projections = v == Variant::bottleneck && rng.below(2) == 0;
  cfg.seed = rng.below(1000000);
  return cfg;
}

// Makes the regressed offsets fractional and several cells long.
template <Real T>
void spread_offsets(RepGraphLayer<T>& layer, Rng& rng) {
  for (auto& v : layer.params().at("offset.weight").data()) v = static_cast<T>(v * 0.3);
  for (auto& v : layer.params().at("offset.bias").data()) v = static_cast<T>(rng.uniform(-2.5, 2.5));
}

Outcome dense_oracle() {
  const auto r = run_dense_oracle(6, 6, 8, 4, 1);
  std::ostringstream os;
  os << "max abs diff " << r.max_abs_diff << ", " << r.seconds << " s";
  return {r.max_abs_diff < 1e-6 && r.seconds < 1.0, os.str()};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto rows = run_gradient_suite({1, 2, 3}, 1e-6, 1e-5);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string failed;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) failed += " " + r.name + "/" + std::to_string(r.seed);
  }
  std::ostringstream os;
  os << rows.size() << " checks over 3 seeds, worst rel err " << worst << ", " << secs << " s";
  if (!failed.empty()) os << ", failed:" << failed;
  return {failed.empty() && secs < 120.0, os.str()};
}

Outcome flops_reproduction() {
  Geometry g;
  g.h = 256;
  g.w = 128;
  g.channels = 2048;
  g.inner = 256;
  g.nodes = 9;
  const double nl = count_flops(Block::nl, g).gflops();
  const double brg = count_flops(Block::brg, g).gflops();
  const bool ok = std::abs(nl - 601.4) <= 0.1 * 601.4 && std::abs(brg - 34.96) <= 0.1 * 34.96 && nl / brg >= 15.0;
  std::ostringstream os;
  os << "NL " << nl << " G (ref 601.4), BRG " << brg << " G (ref 34.96), ratio " << nl / brg << ", "
     << FlopsReport::convention;
  return {ok, os.str()};
}

Outcome complexity_scaling() {
  std::vector<double> n, dense, sparse;
  for (std::size_t side : {16, 32, 64}) {
    Geometry g;
    g.h = g.w = side;
    g.channels = 256;
    g.inner = 64;
    g.nodes = 9;
    n.push_back(double(side * side));
    dense.push_back(double(attention_core_macs(Block::nl, g)));
    sparse.push_back(double(attention_core_macs(Block::brg, g)));
  }
  const double a = loglog_slope(n, dense), b = loglog_slope(n, sparse);
  std::ostringstream os;
  os << "NL exponent " << a << ", RepGraph exponent " << b;
  return {std::abs(a - 2.0) <= 0.05 && std::abs(b - 1.0) <= 0.05, os.str()};
}

Outcome wall_clock() {
  BenchConfig cfg;
  cfg.blocks = {"nl", "brg"};
  cfg.geometries = {{128, 64}};
  cfg.channels = 256;
  cfg.inner = 64;
  cfg.nodes = 9;
  cfg.dtype = "f32";
  const auto rows = run_benchmark(cfg);
  double nl = 0, brg = 0;
  for (const auto& r : rows) {
    if (r.skipped) return {false, r.block + " skipped: " + r.reason};
    (r.block == "nl" ? nl : brg) = r.median_ms;
  }
  std::ostringstream os;
  os << "median NL " << nl << " ms, BRG " << brg << " ms, ratio " << nl / brg;
  return {brg <= 0.5 * nl, os.str()};
}

Outcome identity_at_init() {
  Rng rng(2024);
  std::size_t exact = 0, total = 0;
  for (Variant v : {Variant::simple, Variant::bottleneck}) {
    LayerConfig cfg;
    cfg.variant = v;
    cfg.channels = 16;
    cfg.inner = 8;
    cfg.init_mode = InitMode::pretrained_insert;
    cfg.seed = 5;
    RepGraphLayer<double> layer(cfg);
    for (int t = 0; t < 10; ++t) {
      const auto x = rng.uniform_tensor<double>(Shape4{2, 16, 9, 7}, -3, 3);
      exact += layer.forward(x).identical(x);
      ++total;
    }
  }
  return {exact == total, std::to_string(exact) + "/" + std::to_string(total) + " outputs bit-identical to the input"};
}

Outcome variant_reductions() {
  Rng rng(77);
  std::size_t ok = 0;
  for (int k = 0; k < 10; ++k) {
    RepGraphLayer<double> layer(fuzz_config(rng, k % 2 == 0 ? Variant::simple : Variant::bottleneck));
    spread_offsets(layer, rng);
    const auto& c = layer.config();
    const auto x = rng.uniform_tensor<double>(Shape4{1 + rng.below(2), c.channels, 2 + rng.below(6), 2 + rng.below(6)},
                                              -1, 1);
    const auto base = layer.forward(x);
    ok += grid_repgraph_forward(x, layer, GridConfig{1}).identical(base) &&
          group_repgraph_forward(x, layer, GroupConfig{1}).identical(base);
  }
  return {ok == 10, std::to_string(ok) + "/10 configs bit-identical for g_s=1 and G=1"};
}

Outcome normalization() {
  Rng rng(99);
  double worst = 0, min_entry = 1;
  std::size_t configs = 0;
  for (std::size_t S : {1, 9, 27}) {
    for (int k = 0; k < 6; ++k) {
      LayerConfig cfg = fuzz_config(rng, k % 2 == 0 ? Variant::simple : Variant::bottleneck);
      cfg.nodes = S;
      cfg.grid_size = 1 + rng.below(3);
      cfg.groups = 1;
      for (std::size_t g = cfg.inner; g >= 1; --g) {
        if (cfg.inner % g == 0 && rng.below(2) == 0) {
          cfg.groups = g;
          break;
        }
      }
      RepGraphLayer<double> layer(cfg);
      spread_offsets(layer, rng);
      const auto x = rng.uniform_tensor<double>(Shape4{1 + rng.below(2), cfg.channels, 3 + rng.below(6), 3 + rng.below(6)},
                                                -5, 5);
      AttentionWeights<double> w;
      ForwardOptions<double> opt;
      opt.weights_out = &w;
      (void)layer.forward(x, opt);
      worst = std::max(worst, w.max_row_sum_error());
      min_entry = std::min(min_entry, w.min_entry());
      ++configs;
    }
  }
  std::ostringstream os;
  os << configs << " configs over S in {1, 9, 27}, max |row sum - 1| " << worst << ", min weight " << min_entry;
  return {worst <= 1e-10 && min_entry >= 0.0, os.str()};
}

Outcome toy_training(const std::string& checkpoint) {
  const auto t0 = Clock::now();
  TrainConfig cfg;
  cfg.iters = 500;
  cfg.seed = 7;
  cfg.model.nodes = 9;
  cfg.checkpoint = checkpoint;
  const auto rg = toy_train(cfg);

  TrainConfig ctrl = cfg;
  ctrl.model.ablate = true;
  ctrl.checkpoint.reset();
  const auto ablated = toy_train(ctrl);
  const double secs = seconds_since(t0);

  std::ostringstream os;
  os << "held-out pixel acc " << 100 * rg.heldout_acc << "% vs ablated " << 100 * ablated.heldout_acc
     << "%, offset grad norm at iter 1 " << rg.first_offset_grad_norm << ", " << secs << " s";
  const bool ok = !rg.diverged && rg.iterations_run == 500 && rg.heldout_acc >= 0.95 &&
                  rg.heldout_acc > ablated.heldout_acc && rg.first_offset_grad_norm > 0 && secs < 300.0;
  return {ok, os.str()};
}

Outcome affinity_statistics(const std::string& checkpoint, const std::string& csv) {
  Matrix<double> uniform(8, 16, 1.0 / 16);
  Matrix<double> one_hot(8, 16);
  for (std::size_t r = 0; r < 8; ++r) one_hot(r, (5 * r) % 16) = 1.0;
  const auto u = affinity_stats(uniform);
  const auto o = affinity_stats(one_hot);
  bool exact = true;
  for (double g : u.imbalance) exact = exact && g == 0.0;
  for (double g : o.imbalance) exact = exact && g == 1.0;

  // Dense affinity of the trained theta/phi over the toy features.
  auto model = load_toy_model(load_checkpoint<float>(checkpoint));
  Rng rng(11);
  const auto batch = make_toy_batch<float>(1, rng);
  const auto feats = model.features(batch.images).cast<double>();
  auto nl = NonLocalParams<double>::create(NonLocalConfig{feats.c(), model.config().inner, Fusion::sum, InitMode::fresh, 0});
  for (const char* name : {"theta.weight", "theta.bias", "phi.weight", "phi.bias"}) {
    nl.params.at(name) = model.layer().params().at(name).cast<double>();
  }
  const auto st = affinity_stats(nonlocal_affinity(feats, nl), "trained toy model");
  {
    std::ofstream os(csv);
    write_histogram_csv(os, st);
  }
  std::ifstream back(csv);
  std::string header;
  std::getline(back, header);
  const bool emitted = header == "bin_lo,bin_hi,count";

  std::ostringstream os;
  os << "uniform " << u.mean_imbalance() << ", one-hot " << o.mean_imbalance() << ", trained-model histogram "
     << st.rows << "x" << st.cols << " (mean imbalance " << st.mean_imbalance() << ") written to " << csv;
  return {exact && emitted, os.str()};
}

}  // namespace

int main() {
  const std::string checkpoint = "acceptance_toy.ck";
  const std::string histogram = "acceptance_affinity_hist.csv";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 dense-equivalence oracle", dense_oracle},
      {"2 gradient suite", gradient_suite},
      {"3 FLOPs reproduction", flops_reproduction},
      {"4 complexity scaling", complexity_scaling},
      {"5 wall-clock ratio", wall_clock},
      {"6 identity at init", identity_at_init},
      {"7 variant reductions", variant_reductions},
      {"8 attention normalization", normalization},
      {"9 toy training", [&] { return toy_training(checkpoint); }},
      {"10 affinity statistics", [&] { return affinity_statistics(checkpoint, histogram); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
