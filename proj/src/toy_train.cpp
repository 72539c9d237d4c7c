#include "repgraph/toy_train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "repgraph/conv.hpp"
#include "repgraph/error.hpp"
#include "repgraph/graph_ops.hpp"

namespace repgraph {
namespace {

constexpr const char* kLayerPrefix = "rg.";
constexpr std::uint64_t kHeldOutStream = 0x9e3779b97f4a7c15ULL;

// Class colours; index 0 is the background mean.
constexpr double kPalette[4][3] = {{0.5, 0.5, 0.5}, {0.9, 0.25, 0.25}, {0.25, 0.9, 0.25}, {0.25, 0.25, 0.9}};

LayerConfig layer_config(const ToyModelConfig& m) {
  LayerConfig lc;
  lc.variant = m.variant;
  lc.nodes = m.nodes;
  lc.channels = m.hidden;
  lc.inner = m.inner;
  lc.seed = m.seed + 1;
  return lc;
}

template <Real T>
void add_conv(ParamSet<T>& params, const std::string& name, std::size_t c_out, std::size_t c_in, Rng& rng) {
  params.add(name + ".weight", fan_in_uniform<T>(Shape4{c_out, c_in, 3, 3}, c_in * 9, rng));
  params.add(name + ".bias", Tensor4<T>(1, c_out, 1, 1));
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

template <Real T>
ToyBatch<T> make_toy_batch(std::size_t batch, Rng& rng, const ToyTaskConfig& task) {
  if (task.classes < 2 || task.classes > 4) throw Error(ErrorCode::config, "toy task supports 2..4 classes");
  if (task.min_rects == 0 || task.min_rects > task.max_rects || task.min_side == 0 ||
      task.min_side > task.max_side || task.max_side > task.size) {
    throw Error(ErrorCode::config, "inconsistent toy task rectangle settings");
  }
  const std::size_t S = task.size;
  ToyBatch<T> out{Tensor4<T>(batch, 3, S, S), std::vector<int>(batch * S * S, 0)};
  for (std::size_t b = 0; b < batch; ++b) {
    const double fy = rng.uniform(0.3, 0.9);
    const double fx = rng.uniform(0.3, 0.9);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    std::vector<int> label(S * S, 0);
    const std::size_t rects = task.min_rects + rng.below(task.max_rects - task.min_rects + 1);
    for (std::size_t r = 0; r < rects; ++r) {
      const std::size_t hh = task.min_side + rng.below(task.max_side - task.min_side + 1);
      const std::size_t ww = task.min_side + rng.below(task.max_side - task.min_side + 1);
      const std::size_t y0 = rng.below(S - hh + 1);
      const std::size_t x0 = rng.below(S - ww + 1);
      const int cls = 1 + static_cast<int>(rng.below(task.classes - 1));
      for (std::size_t y = y0; y < y0 + hh; ++y) {
        for (std::size_t x = x0; x < x0 + ww; ++x) label[y * S + x] = cls;
      }
    }
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const int cls = label[y * S + x];
        const double tex = task.texture * std::sin(fy * y + phase) * std::cos(fx * x);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = kPalette[cls][c] + (cls == 0 ? tex : 0.0) + task.noise * rng.normal();
          out.images(b, c, y, x) = static_cast<T>(v);
        }
        out.labels[b * S * S + y * S + x] = cls;
      }
    }
  }
  return out;
}

template <Real T>
ToyModel<T>::ToyModel(const ToyModelConfig& cfg) : cfg_(cfg), layer_(layer_config(cfg)) {
  Rng rng(cfg.seed);
  add_conv(params_, "conv1", cfg.hidden, 3, rng);
  add_conv(params_, "conv2", cfg.hidden, cfg.hidden, rng);
  add_projection(params_, "cls", cfg.classes, cfg.hidden, rng);
  add_projection(params_, "aux", cfg.classes, cfg.hidden, rng);
}

template <Real T>
typename ToyModel<T>::Bound ToyModel<T>::bind_all(Tape<T>& tape, bool requires_grad) {
  return Bound{bind(tape, params_, requires_grad), bind(tape, layer_.params(), requires_grad && !cfg_.ablate)};
}

template <Real T>
Var<T> ToyModel<T>::features(Var<T> x, const Bound& p) const {
  Var<T> h = ag::relu(ag::conv3x3(x, p.own["conv1.weight"], p.own.maybe("conv1.bias")));
  return ag::relu(ag::conv3x3(h, p.own["conv2.weight"], p.own.maybe("conv2.bias")));
}

template <Real T>
Var<T> ToyModel<T>::logits(Var<T> x, const Bound& p, const ForwardOptions<T>& opt, Var<T>* aux_logits) {
  Var<T> h = features(x, p);
  if (aux_logits) *aux_logits = ag::project(h, p.own["aux.weight"], p.own.maybe("aux.bias"));
  if (!cfg_.ablate) h = layer_.forward(h, p.layer, opt);
  return ag::project(h, p.own["cls.weight"], p.own.maybe("cls.bias"));
}

template <Real T>
Tensor4<T> ToyModel<T>::predict(const Tensor4<T>& x, const ForwardOptions<T>& opt) {
  Tape<T> tape(false);
  const Bound p = bind_all(tape, false);
  return logits(tape.constant(x), p, opt).value();
}

template <Real T>
Tensor4<T> ToyModel<T>::features(const Tensor4<T>& x) {
  Tape<T> tape(false);
  const Bound p = bind_all(tape, false);
  return features(tape.constant(x), p).value();
}

template <Real T>
ParamSet<T> ToyModel<T>::flat_params() const {
  ParamSet<T> flat;
  for (const auto& [name, value] : params_.entries()) flat.add(name, value);
  for (const auto& [name, value] : layer_.params().entries()) flat.add(kLayerPrefix + name, value);
  return flat;
}

template <Real T>
void ToyModel<T>::load_flat_params(const ParamSet<T>& flat) {
  auto copy_into = [&flat](ParamSet<T>& dst, const std::string& prefix) {
    for (auto& [name, value] : dst.entries()) {
      const Tensor4<T>& src = flat.at(prefix + name);
      if (!(src.shape() == value.shape())) {
        throw Error(ErrorCode::dimension, "parameter " + prefix + name + " is " + src.shape().str() + ", model has " +
                                              value.shape().str());
      }
      value = src;
    }
  };
  copy_into(params_, "");
  copy_into(layer_.params(), kLayerPrefix);
}

double poly_lr(double base, std::size_t iter, std::size_t iter_max, double power) {
  if (iter_max == 0) return base;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(iter_max);
  return base * std::pow(std::max(frac, 0.0), power);
}

double pixel_accuracy(const Tensor4<float>& logits, const std::vector<int>& labels) {
  const std::size_t hw = logits.shape().spatial();
  if (labels.size() != logits.n() * hw) throw Error(ErrorCode::dimension, "label count does not match logits");
  std::size_t correct = 0;
  for (std::size_t b = 0; b < logits.n(); ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.c(); ++k) {
        if (logits.plane(b, k)[p] > logits.plane(b, best)[p]) best = k;
      }
      correct += static_cast<int>(best) == labels[b * hw + p];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::string format_train_metadata(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "hidden=" << cfg.model.hidden << "\ninner=" << cfg.model.inner << "\nnodes=" << cfg.model.nodes
     << "\nclasses=" << cfg.model.classes << "\nvariant=" << to_string(cfg.model.variant)
     << "\nablate=" << (cfg.model.ablate ? 1 : 0) << "\nseed=" << cfg.model.seed << "\niters=" << cfg.iters << "\n";
  return os.str();
}

ToyModel<float> load_toy_model(const Checkpoint<float>& ck) {
  const auto kv = parse_kv(ck.metadata);
  auto get = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::malformed_header, "checkpoint metadata lacks '" + key + "'");
    return it->second;
  };
  ToyModelConfig m;
  m.hidden = std::stoull(get("hidden"));
  m.inner = std::stoull(get("inner"));
  m.nodes = std::stoull(get("nodes"));
  m.classes = std::stoull(get("classes"));
  m.variant = parse_variant(get("variant"));
  m.ablate = get("ablate") == "1";
  m.seed = std::stoull(get("seed"));
  ToyModel<float> model(m);
  model.load_flat_params(ck.params);
  return model;
}

TrainResult toy_train(const TrainConfig& cfg) {
  if (cfg.iters == 0 || cfg.batch == 0 || cfg.eval_batch == 0) {
    throw Error(ErrorCode::config, "iters, batch and eval_batch must be positive");
  }
  if (cfg.model.classes != cfg.task.classes) throw Error(ErrorCode::config, "model and task disagree on classes");
  ToyModel<float> model(cfg.model);
  Rng data_rng(cfg.seed);
  TrainResult result;

  std::vector<Tensor4<float>*> slots;
  for (auto& e : model.params().entries()) slots.push_back(&e.second);
  if (!cfg.model.ablate) {
    for (auto& e : model.layer().params().entries()) slots.push_back(&e.second);
  }
  std::vector<Tensor4<float>> velocity;
  for (auto* s : slots) velocity.emplace_back(s->shape());
  ParamSet<float> last_good = model.flat_params();

  for (std::size_t it = 0; it < cfg.iters; ++it) {
    const double lr = poly_lr(cfg.lr, it, cfg.iters, cfg.poly_power);
    const ToyBatch<float> batch = make_toy_batch<float>(cfg.batch, data_rng, cfg.task);
    Tape<float> tape;
    const auto bound = model.bind_all(tape, true);
    ForwardOptions<float> opt;
    opt.training = true;
    Var<float> aux;
    const Var<float> logits = model.logits(tape.constant(batch.images), bound, opt, &aux);
    Var<float> loss = ag::softmax_cross_entropy(logits, batch.labels);
    if (cfg.aux_weight > 0) {
      loss = ag::add(loss, ag::scale(ag::softmax_cross_entropy(aux, batch.labels), static_cast<float>(cfg.aux_weight)));
    }
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) {
      result.diverged = true;
      break;
    }
    const Gradients<float> grads = tape.backward(loss);

    std::vector<Var<float>> vars;
    for (const auto& e : model.params().entries()) vars.push_back(bound.own[e.first]);
    if (!cfg.model.ablate) {
      for (const auto& e : model.layer().params().entries()) vars.push_back(bound.layer[e.first]);
    }
    if (it == 0 && !cfg.model.ablate) {
      double sq = 0;
      for (float g : grads[bound.layer["offset.weight"]].data()) sq += double(g) * g;
      result.first_offset_grad_norm = std::sqrt(sq);
    }
    bool finite = true;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& g = grads[vars[i]];
      auto& v = velocity[i];
      auto& p = *slots[i];
      for (std::size_t j = 0; j < p.numel(); ++j) {
        v[j] = static_cast<float>(cfg.momentum * v[j] + g[j] + cfg.weight_decay * p[j]);
        p[j] = static_cast<float>(p[j] - lr * v[j]);
      }
      finite = finite && p.all_finite();
    }
    result.log.push_back(TrainLogRow{it + 1, lr, loss_value, pixel_accuracy(logits.value(), batch.labels)});
    result.iterations_run = it + 1;
    if (!finite) {
      result.diverged = true;
      break;
    }
    last_good = model.flat_params();
  }

  if (result.diverged) model.load_flat_params(last_good);
  Rng eval_rng(cfg.seed ^ kHeldOutStream);
  const ToyBatch<float> held = make_toy_batch<float>(cfg.eval_batch, eval_rng, cfg.task);
  result.heldout_acc = pixel_accuracy(model.predict(held.images), held.labels);
  result.params = model.flat_params();
  if (cfg.checkpoint) save_checkpoint(*cfg.checkpoint, result.params, format_train_metadata(cfg));
  return result;
}

void write_train_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
  os << "iter,lr,loss,pix_acc\n";
  os.precision(8);
  for (const auto& r : log) os << r.iter << ',' << r.lr << ',' << r.loss << ',' << r.pix_acc << '\n';
}

template ToyBatch<float> make_toy_batch<float>(std::size_t, Rng&, const ToyTaskConfig&);
template ToyBatch<double> make_toy_batch<double>(std::size_t, Rng&, const ToyTaskConfig&);
template class ToyModel<float>;
template class ToyModel<double>;

}  // namespace repgraph
