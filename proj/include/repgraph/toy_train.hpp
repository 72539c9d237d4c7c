#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "repgraph/checkpoint.hpp"
#include "repgraph/repgraph.hpp"

namespace repgraph {

// Synthetic per-pixel classification: 3-5 axis-aligned rectangles on a
// textured background. Label 0 is background, 1..classes-1 the rectangle
// colour class (later rectangles paint over earlier ones).
struct ToyTaskConfig {
  std::size_t size = 32;
  std::size_t classes = 4;
  std::size_t min_rects = 3;
  std::size_t max_rects = 5;
  std::size_t min_side = 6;
  std::size_t max_side = 14;
  double texture = 0.15;
  double noise = 0.35;
};

template <Real T>
struct ToyBatch {
  Tensor4<T> images;        // (n, 3, size, size)
  std::vector<int> labels;  // b*size*size + y*size + x
};

template <Real T>
ToyBatch<T> make_toy_batch(std::size_t batch, Rng& rng, const ToyTaskConfig& task = {});

struct ToyModelConfig {
  std::size_t hidden = 16;
  std::size_t inner = 8;
  std::size_t nodes = 9;
  std::size_t classes = 4;
  Variant variant = Variant::simple;
  bool ablate = false;  // RepGraph layer replaced by the identity
  std::uint64_t seed = 7;
};

// conv3x3 -> ReLU -> conv3x3 -> ReLU -> RepGraph -> 1x1 classifier, plus an
// auxiliary 1x1 classifier on the features entering the RepGraph layer
// (training loss only).
template <Real T>
class ToyModel {
 public:
  explicit ToyModel(const ToyModelConfig& cfg);

  const ToyModelConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  RepGraphLayer<T>& layer() { return layer_; }

  struct Bound {
    BoundParams<T> own;
    BoundParams<T> layer;
  };
  Bound bind_all(Tape<T>& tape, bool requires_grad);

  Var<T> features(Var<T> x, const Bound& p) const;
  Var<T> logits(Var<T> x, const Bound& p, const ForwardOptions<T>& opt = {}, Var<T>* aux_logits = nullptr);
  Tensor4<T> predict(const Tensor4<T>& x, const ForwardOptions<T>& opt = {});
  Tensor4<T> features(const Tensor4<T>& x);

  // Layer parameters appear under an "rg." prefix.
  ParamSet<T> flat_params() const;
  void load_flat_params(const ParamSet<T>& flat);

 private:
  ToyModelConfig cfg_;
  ParamSet<T> params_;
  RepGraphLayer<T> layer_;
};

struct TrainConfig {
  std::size_t iters = 500;
  std::size_t batch = 8;
  std::size_t eval_batch = 16;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  double aux_weight = 0.4;  // weight of the auxiliary head's cross-entropy
  std::uint64_t seed = 7;
  ToyModelConfig model;
  ToyTaskConfig task;
  std::optional<std::filesystem::path> checkpoint;  // written at the end, or the last good state on divergence
};

struct TrainLogRow {
  std::size_t iter = 0;
  double lr = 0;
  double loss = 0;
  double pix_acc = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double heldout_acc = 0;
  double first_offset_grad_norm = 0;  // gradient norm of offset.weight at iteration 1
  bool diverged = false;
  std::size_t iterations_run = 0;
  ParamSet<float> params;  // final (or last good) flat parameters
};

// lr * (1 - iter/iter_max)^power with iter counted from 0.
double poly_lr(double base, std::size_t iter, std::size_t iter_max, double power);

double pixel_accuracy(const Tensor4<float>& logits, const std::vector<int>& labels);

// Trains in f32; the held-out batch is drawn from a stream separate from
// the training batches.
TrainResult toy_train(const TrainConfig& cfg);

std::string format_train_metadata(const TrainConfig& cfg);
// Rebuilds a model from a checkpoint written by toy_train.
ToyModel<float> load_toy_model(const Checkpoint<float>& ck);

void write_train_csv(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace repgraph
