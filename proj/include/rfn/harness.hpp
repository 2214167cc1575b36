#pragma once

// Training loop, evaluation metrics and the ablation grid runner.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfn/gradcheck.hpp"
#include "rfn/losses.hpp"
#include "rfn/model.hpp"
#include "rfn/rng.hpp"
#include "rfn/synthdata.hpp"

namespace rfn {

// What the invariance term rotates: the block input (default) or the raw image.
enum class RiSource { Features, Image };
// All n-1 rotated copies per batch, or one sampled angle.
enum class RiAngles { All, Sampled };

struct TrainOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lr_decay = 0.95;
  std::size_t lr_decay_every = 10;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  LossConfig loss;
  RiSource ri_source = RiSource::Features;
  RiAngles ri_angles = RiAngles::All;

  double learning_rate_at(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double loss_ri = 0.0;
  double train_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double angular_mae = 0.0;       // radians
  double invariance_score = 0.0;  // mean distance between RI(X) and RI(rot90 X)
  std::vector<EpochRecord> history;
  std::size_t param_total = 0;
  double wall_time = 0.0;  // seconds

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct TrainResult {
  Model<float> model;
  MetricsReport report;  // history and param_total; test metrics filled by evaluate()
};

template <typename T>
struct BatchLoss {
  ModelGraph<T> graph;
  Var<T> cls, reg, ri, total;
};

// images [B,S,S,1]; targets [B,2] = (sin, cos) of the orientation. `angle_rng`
// is consulted only in RiAngles::Sampled mode.
template <typename T>
BatchLoss<T> batch_loss(const Model<T>& model, Tape<T>& tape, const std::vector<Var<T>>& params,
                        const Tensor<T>& images, const std::vector<int>& labels,
                        const Tensor<T>& targets, const TrainOptions& opts, Rng* angle_rng);

// Packs dataset samples [first, first + count) in `order` into model inputs.
void make_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t first,
                std::size_t count, Tensor<float>& images, std::vector<int>& labels,
                Tensor<float>& targets);

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
                  std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Pure: never mutates the model.
MetricsReport evaluate(const Model<float>& model, const Dataset& data, const LossConfig& loss);

// Central differences of the full training loss (backbone, block, heads and
// the weighted task and invariance terms) at 64-bit on a random batch, with
// parameters drawn with standard deviation `param_std`.
// Tolerance 1e-4, kink skipping on, and a relative-error floor of 1e-5, so
// components below that size need an absolute error under 1e-9.
GradCheckOptions model_check_options();

GradCheckReport grad_check_model(const ModelSpec& spec, const TrainOptions& opts,
                                 std::size_t batch, std::uint64_t seed, double param_std,
                                 const GradCheckOptions& check = model_check_options());

// Small random architecture (8x8 input, two stages) for gradient checks: angle
// count, reduction ratio, pooling, resuming and insertion stage all vary.
ModelSpec random_check_spec(Rng& rng);

// Orientation error on the circle, in [0, pi].
double angular_error(double predicted, double target);

std::string metrics_history_csv(const MetricsReport& report);
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace rfn
