#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "repgraph/affinity.hpp"
#include "repgraph/bench.hpp"
#include "repgraph/checkpoint.hpp"
#include "repgraph/error.hpp"
#include "repgraph/flops.hpp"
#include "repgraph/nonlocal.hpp"
#include "repgraph/suites.hpp"
#include "repgraph/toy_train.hpp"

using namespace repgraph;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kUsage = 2;

// Layer flags shared by several subcommands; a --config file fills the
// defaults and explicit flags override it.
struct LayerFlags {
  std::string config_path;
  std::string variant = "simple";
  std::string fusion = "sum";
  std::size_t nodes = 9;
  std::size_t c = 0;
  std::size_t cp = 0;
  std::size_t gs = 1;
  std::size_t groups = 1;
  std::uint64_t seed = 0;

  void attach(CLI::App* app, bool with_config) {
    if (with_config) app->add_option("--config", config_path, "key=value layer config file");
    app->add_option("--variant", variant, "simple|bottleneck (base layer of grid/group)");
    app->add_option("--fusion", fusion, "sum|concat");
    app->add_option("--nodes", nodes, "S, sampled nodes per query");
    app->add_option("--c", c, "input channels C");
    app->add_option("--cp", cp, "inner channels C'");
    app->add_option("--gs", gs, "grid size g_s");
    app->add_option("--groups", groups, "channel groups G");
    app->add_option("--seed", seed, "seed");
  }

  void apply_config(CLI::App* app) {
    if (config_path.empty()) return;
    std::ifstream is(config_path);
    if (!is) throw Error(ErrorCode::config, "cannot open config " + config_path);
    const PartialLayerConfig parsed = parse_partial_layer_config(is);
    const LayerConfig& cfg = parsed.config;
    // Explicit flags win over the file.
    auto take = [&](const char* key, const char* flag) { return parsed.keys.count(key) && app->count(flag) == 0; };
    if (take("variant", "--variant")) variant = to_string(cfg.variant);
    if (take("fusion", "--fusion")) fusion = to_string(cfg.fusion);
    if (take("nodes", "--nodes")) nodes = cfg.nodes;
    if (take("c", "--c")) c = cfg.channels;
    if (take("cp", "--cp")) cp = cfg.inner;
    if (take("gs", "--gs")) gs = cfg.grid_size;
    if (take("groups", "--groups")) groups = cfg.groups;
    if (take("seed", "--seed")) seed = cfg.seed;
  }
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error(ErrorCode::io_failure, "cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  bool to_file() const { return file_ != nullptr; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

int run_flops(LayerFlags& lf, const std::string& block, std::size_t h, std::size_t w, const std::string& out,
              CLI::App* app) {
  lf.apply_config(app);
  Geometry g;
  g.h = h;
  g.w = w;
  g.channels = lf.c;
  g.inner = lf.cp;
  g.nodes = lf.nodes;
  g.grid_size = lf.gs;
  g.groups = lf.groups;
  g.fusion = parse_fusion(lf.fusion);
  g.variant_for_extended = parse_variant(lf.variant);
  const FlopsReport r = count_flops(block, g);
  Output o(out);
  write_flops_csv(o.stream(), r);
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << block << " " << h << "x" << w << " C=" << lf.c << " C'=" << lf.cp << " S=" << lf.nodes << ": "
            << r.total << " MACs = " << r.gflops() << " GFLOPs (" << FlopsReport::convention << ")\n";
  return kOk;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RepGraph sparse attention toolkit"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  // flops
  LayerFlags flops_flags;
  std::string flops_block;
  std::size_t flops_h = 0, flops_w = 0;
  std::string flops_out;
  auto* flops = app.add_subcommand("flops", "closed-form MAC counts per sub-operation");
  flops->add_option("--block", flops_block, "nl|srg|brg|grid|group")->required();
  flops->add_option("--h", flops_h, "height")->required();
  flops->add_option("--w", flops_w, "width")->required();
  flops->add_option("--out", flops_out, "CSV path (stdout when omitted)");
  flops_flags.attach(flops, true);

  // bench
  LayerFlags bench_flags;
  bench_flags.c = 256;
  bench_flags.cp = 64;
  bench_flags.gs = 2;
  bench_flags.groups = 4;
  std::string bench_blocks = "nl,brg";
  std::string bench_geoms;
  std::size_t bench_h = 128, bench_w = 64, bench_repeats = 5, bench_warmup = 2, bench_budget = 2048;
  std::string bench_dtype = "f32", bench_out;
  auto* bench = app.add_subcommand("bench", "median forward latency per block");
  bench->add_option("--block", bench_blocks, "comma list of nl,srg,brg,grid,group,noop");
  bench->add_option("--h", bench_h, "height");
  bench->add_option("--w", bench_w, "width");
  bench->add_option("--geometries", bench_geoms, "comma list of HxW, overrides --h/--w");
  bench->add_option("--repeats", bench_repeats, "timed repeats (>= 5)");
  bench->add_option("--warmup", bench_warmup, "untimed warmup runs (>= 2)");
  bench->add_option("--dtype", bench_dtype, "f32|f64");
  bench->add_option("--budget-mb", bench_budget, "skip geometries whose working set exceeds this");
  bench->add_option("--out", bench_out, "CSV path (stdout when omitted)");
  bench_flags.attach(bench, true);

  // affinity
  std::string aff_checkpoint, aff_out, aff_topk_out, aff_source = "dense";
  std::size_t aff_h = 16, aff_w = 16, aff_c = 16, aff_cp = 8, aff_bins = 24;
  std::uint64_t aff_seed = 0;
  auto* affinity = app.add_subcommand("affinity", "histogram / top-k / imbalance of attention weights");
  affinity->add_option("--checkpoint", aff_checkpoint, "toy model checkpoint; random non-local block when omitted");
  affinity->add_option("--source", aff_source, "dense (full affinity from theta/phi) | sparse (sampled weights)");
  affinity->add_option("--h", aff_h, "height of the random input (no checkpoint)");
  affinity->add_option("--w", aff_w, "width of the random input (no checkpoint)");
  affinity->add_option("--c", aff_c, "channels of the random block (no checkpoint)");
  affinity->add_option("--cp", aff_cp, "inner channels of the random block (no checkpoint)");
  affinity->add_option("--bins", aff_bins, "log-spaced bins between 1e-6 and 1");
  affinity->add_option("--seed", aff_seed, "seed");
  affinity->add_option("--out", aff_out, "histogram CSV path (stdout when omitted)");
  affinity->add_option("--topk-out", aff_topk_out, "top-k mass CSV path");

  // train
  TrainConfig train_cfg;
  std::string train_out, train_ckpt, train_variant = "simple";
  bool train_ablate = false;
  auto* train = app.add_subcommand("train", "toy segmentation run");
  train->add_option("--iters", train_cfg.iters, "iterations");
  train->add_option("--seed", train_cfg.seed, "seed");
  train->add_option("--nodes", train_cfg.model.nodes, "S");
  train->add_option("--variant", train_variant, "simple|bottleneck");
  train->add_option("--lr", train_cfg.lr, "base learning rate");
  train->add_option("--batch", train_cfg.batch, "batch size");
  train->add_flag("--ablate", train_ablate, "replace the RepGraph layer by the identity");
  train->add_option("--out", train_out, "log CSV path (stdout when omitted)");
  train->add_option("--checkpoint", train_ckpt, "checkpoint path");

  // gradcheck
  std::size_t gc_seeds = 3;
  std::string gc_out;
  double gc_eps = 1e-6, gc_tol = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "central-difference checks of every op and layer");
  gradcheck->add_option("--seeds", gc_seeds, "seeds per case");
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "relative tolerance");
  gradcheck->add_option("--out", gc_out, "CSV path (stdout when omitted)");

  // oracle
  std::size_t or_n = 36, or_c = 8, or_cp = 4;
  std::uint64_t or_seed = 0;
  std::string or_out, or_fusion = "sum";
  auto* oracle = app.add_subcommand("oracle", "dense-equivalence check against the non-local block");
  oracle->add_option("--n", or_n, "number of nodes N = h*w");
  oracle->add_option("--c", or_c, "channels");
  oracle->add_option("--cp", or_cp, "inner channels");
  oracle->add_option("--fusion", or_fusion, "sum|concat");
  oracle->add_option("--seed", or_seed, "seed");
  oracle->add_option("--out", or_out, "CSV path");

  if (argc <= 1) {
    std::cout << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*flops) return run_flops(flops_flags, flops_block, flops_h, flops_w, flops_out, flops);

    if (*bench) {
      bench_flags.apply_config(bench);
      BenchConfig cfg;
      cfg.blocks = split(bench_blocks, ',');
      if (bench_geoms.empty()) {
        cfg.geometries = {{bench_h, bench_w}};
      } else {
        for (const auto& g : split(bench_geoms, ',')) {
          const auto x = g.find('x');
          if (x == std::string::npos) throw Error(ErrorCode::config, "geometry '" + g + "' is not HxW");
          cfg.geometries.emplace_back(std::stoull(g.substr(0, x)), std::stoull(g.substr(x + 1)));
        }
      }
      cfg.channels = bench_flags.c;
      cfg.inner = bench_flags.cp;
      cfg.nodes = bench_flags.nodes;
      cfg.grid_size = bench_flags.gs;
      cfg.groups = bench_flags.groups;
      cfg.fusion = parse_fusion(bench_flags.fusion);
      cfg.seed = bench_flags.seed;
      cfg.dtype = bench_dtype;
      cfg.repeats = bench_repeats;
      cfg.warmup = bench_warmup;
      cfg.memory_budget_mb = bench_budget;
      const auto results = run_benchmark(cfg);
      Output o(bench_out);
      write_bench_csv(o.stream(), results);
      return kOk;
    }

    if (*affinity) {
      Matrix<double> rows;
      std::string source;
      Rng rng(aff_seed);
      if (aff_checkpoint.empty()) {
        const auto nl = NonLocalParams<double>::create(NonLocalConfig{aff_c, aff_cp, Fusion::sum, InitMode::fresh, aff_seed});
        rows = nonlocal_affinity(rng.uniform_tensor<double>(Shape4{1, aff_c, aff_h, aff_w}, -1.0, 1.0), nl);
        source = "random non-local block";
      } else {
        auto model = load_toy_model(load_checkpoint<float>(aff_checkpoint));
        const auto batch = make_toy_batch<float>(1, rng);
        if (aff_source == "dense") {
          const auto feats = model.features(batch.images).cast<double>();
          NonLocalParams<double> nl =
              NonLocalParams<double>::create(NonLocalConfig{feats.c(), model.config().inner, Fusion::sum, InitMode::fresh, 0});
          for (const char* name : {"theta.weight", "theta.bias", "phi.weight", "phi.bias"}) {
            nl.params.at(name) = model.layer().params().at(name).cast<double>();
          }
          rows = nonlocal_affinity(feats, nl);
          source = "dense affinity of the trained theta/phi";
        } else if (aff_source == "sparse") {
          AttentionWeights<float> w;
          ForwardOptions<float> opt;
          opt.weights_out = &w;
          (void)model.predict(batch.images, opt);
          const auto m = weights_matrix(w);
          rows = Matrix<double>(m.rows(), m.cols());
          for (std::size_t i = 0; i < m.data().size(); ++i) rows.data()[i] = m.data()[i];
          source = "sampled attention weights";
        } else {
          throw Error(ErrorCode::config, "--source must be dense or sparse");
        }
      }
      HistogramSpec spec;
      spec.log_bins = aff_bins;
      const AffinityStats st = affinity_stats(rows, source, spec);
      Output o(aff_out);
      write_histogram_csv(o.stream(), st);
      if (!aff_topk_out.empty()) {
        Output t(aff_topk_out);
        write_topk_csv(t.stream(), st);
      }
      std::cerr << source << ": " << st.rows << " rows x " << st.cols << " cols, mean imbalance " << st.mean_imbalance()
                << "\n";
      return kOk;
    }

    if (*train) {
      train_cfg.model.variant = parse_variant(train_variant);
      train_cfg.model.ablate = train_ablate;
      train_cfg.model.seed = train_cfg.seed;
      if (!train_ckpt.empty()) train_cfg.checkpoint = train_ckpt;
      const TrainResult r = toy_train(train_cfg);
      Output o(train_out);
      write_train_csv(o.stream(), r.log);
      std::cerr << "held-out pixel accuracy " << r.heldout_acc << ", offset grad norm at iter 1 "
                << r.first_offset_grad_norm << "\n";
      if (r.diverged) {
        std::cerr << "loss diverged after " << r.iterations_run << " iterations; kept last good parameters\n";
        return kValidation;
      }
      return kOk;
    }

    if (*gradcheck) {
      std::vector<std::uint64_t> seeds;
      for (std::size_t s = 1; s <= gc_seeds; ++s) seeds.push_back(s);
      const auto rows = run_gradient_suite(seeds, gc_eps, gc_tol);
      Output o(gc_out);
      write_gradient_csv(o.stream(), rows);
      bool ok = true;
      for (const auto& r : rows) {
        if (!r.passed) {
          ok = false;
          std::cerr << "FAIL " << r.name << " seed " << r.seed << ": " << r.max_rel_error << " " << r.detail << "\n";
        }
      }
      return ok ? kOk : kValidation;
    }

    if (*oracle) {
      std::size_t h = static_cast<std::size_t>(std::sqrt(static_cast<double>(or_n)));
      while (h > 1 && or_n % h != 0) --h;
      if (or_n == 0) throw Error(ErrorCode::config, "--n must be positive");
      const OracleResult r = run_dense_oracle(h, or_n / h, or_c, or_cp, or_seed, parse_fusion(or_fusion));
      if (!or_out.empty()) {
        Output o(or_out);
        o.stream() << "h,w,c,cp,max_abs_diff,seconds\n"
                   << r.h << ',' << r.w << ',' << or_c << ',' << or_cp << ',' << r.max_abs_diff << ',' << r.seconds
                   << '\n';
      }
      std::cout << "dense oracle " << r.h << "x" << r.w << ": max abs diff " << r.max_abs_diff << "\n";
      return r.max_abs_diff < 1e-6 ? kOk : kValidation;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::config:
      case ErrorCode::contract:
      case ErrorCode::dimension:
        return kUsage;
      default:
        return kValidation;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
