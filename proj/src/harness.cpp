#include "rfn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "rfn/ops.hpp"
#include "rfn/optim.hpp"
#include "rfn/rotation.hpp"

namespace rfn {

namespace {

constexpr double kNormFloor = 1e-12;
constexpr std::size_t kEvalBatch = 128;

template <typename T>
Var<T> flatten(Var<T> x) {
  const std::size_t b = x.shape()[0];
  return ops::reshape(x, Shape{b, x.value().size() / b});
}

}  // namespace

double TrainOptions::learning_rate_at(std::size_t epoch) const {
  if (lr_decay_every == 0) return learning_rate;
  return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
}

double angular_error(double predicted, double target) {
  return std::abs(std::remainder(predicted - target, 2.0 * std::numbers::pi));
}

template <typename T>
BatchLoss<T> batch_loss(const Model<T>& model, Tape<T>& tape, const std::vector<Var<T>>& params,
                        const Tensor<T>& images, const std::vector<int>& labels,
                        const Tensor<T>& targets, const TrainOptions& opts, Rng* angle_rng) {
  const ModelSpec& spec = model.spec();
  BatchLoss<T> out;
  Var<T> x = tape.constant(images);
  out.graph = model.forward(x, params);
  out.cls = ops::softmax_cross_entropy(out.graph.logits, labels);
  out.reg = ops::smooth_l1(out.graph.orient, targets);

  const std::size_t n = spec.use_rfn ? spec.rfn.n : 1;
  if (opts.loss.lambda_ri > 0.0 && n >= 2) {
    const AngleSet set = angle_set(n);
    std::vector<std::size_t> picks;
    if (opts.ri_angles == RiAngles::Sampled) {
      if (angle_rng == nullptr) throw InvalidArgument("sampled invariance angles need an RNG");
      picks.push_back(1 + static_cast<std::size_t>(angle_rng->below(n - 1)));
    } else {
      for (std::size_t j = 1; j < n; ++j) picks.push_back(j);
    }
    const auto stage = static_cast<std::size_t>(spec.rfn.insertion_stage);
    std::vector<Var<T>> rotated;
    for (std::size_t j : picks) {
      Var<T> feat = opts.ri_source == RiSource::Features
                        ? rotate_features(out.graph.features, set.angles[j])
                        : model.backbone(rotate_features(x, set.angles[j]), params, 0, stage);
      rotated.push_back(flatten(model.block(feat, params).ri));
    }
    Var<T> ri = flatten(out.graph.block->ri);
    double sigma = opts.loss.sigma;
    if (opts.loss.median_sigma) {
      sigma = median_bandwidth(ri.value(), ops::mean_of(rotated).value());
    }
    out.ri = l_ri_star(ri, rotated, sigma, opts.loss.form, kNormFloor);
  } else {
    out.ri = tape.constant(Tensor<T>::scalar(T{0}));
  }
  out.total = total_loss(out.cls, out.reg, out.ri, opts.loss);
  return out;
}

void make_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t first,
                std::size_t count, Tensor<float>& images, std::vector<int>& labels,
                Tensor<float>& targets) {
  const std::size_t s = data.image_size;
  images = Tensor<float>(Shape{count, s, s, 1});
  targets = Tensor<float>(Shape{count, 2});
  labels.assign(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const ShapeSample& smp = data.samples.at(order.at(first + i));
    if (smp.image.size() != s * s) {
      throw ShapeError("sample image " + smp.image.shape().str() + " does not match size " +
                       std::to_string(s));
    }
    std::copy(smp.image.data().begin(), smp.image.data().end(), images.ptr() + i * s * s);
    labels[i] = smp.class_id;
    targets[2 * i] = std::sin(smp.orientation);
    targets[2 * i + 1] = std::cos(smp.orientation);
  }
}

namespace {

void check_compatible(const ModelSpec& spec, const Dataset& data) {
  if (data.samples.empty()) throw InvalidArgument("dataset is empty");
  if (data.image_size != spec.image_size) {
    throw InvalidArgument("dataset image size " + std::to_string(data.image_size) +
                          " does not match model image size " + std::to_string(spec.image_size));
  }
  if (data.classes != spec.classes) {
    throw InvalidArgument("dataset has " + std::to_string(data.classes) +
                          " classes, model expects " + std::to_string(spec.classes));
  }
}

std::size_t argmax_row(const Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.shape()[1];
  const float* p = logits.ptr() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

}  // namespace

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainOptions& opts,
                  std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  opts.loss.validate();
  check_compatible(spec, data);
  if (opts.batch_size == 0) throw InvalidArgument("batch size must be positive");

  Rng init_rng(seed);
  TrainResult result{Model<float>(spec, init_rng.next()), {}};
  Model<float>& model = result.model;
  Rng shuffle_rng(init_rng.next());
  Rng angle_rng(init_rng.next());

  OptState<float> state;
  state.momentum = opts.momentum;
  state.weight_decay = opts.weight_decay;

  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Tensor<float> images, targets;
  std::vector<int> labels;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
    }
    state.learning_rate = opts.learning_rate_at(epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = state.learning_rate;
    std::size_t correct = 0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += opts.batch_size, ++batches) {
      const std::size_t count = std::min(opts.batch_size, order.size() - first);
      make_batch(data, order, first, count, images, labels, targets);
      Tape<float> tape;
      const auto params = model.bind(tape, true);
      try {
        BatchLoss<float> loss =
            batch_loss(model, tape, params, images, labels, targets, opts, &angle_rng);
        tape.backward(loss.total);
        rec.loss_total += loss.total.value().item();
        rec.loss_cls += loss.cls.value().item();
        rec.loss_reg += loss.reg.value().item();
        rec.loss_ri += loss.ri.value().item();
        for (std::size_t i = 0; i < count; ++i) {
          if (argmax_row(loss.graph.logits.value(), i) == static_cast<std::size_t>(labels[i])) {
            ++correct;
          }
        }
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ": " + e.what());
      }
      std::vector<Tensor<float>*> ps;
      std::vector<const Tensor<float>*> gs;
      for (std::size_t i = 0; i < params.size(); ++i) {
        ps.push_back(&model.values()[i]);
        gs.push_back(tape.has_grad(params[i]) ? &tape.grad(params[i]) : nullptr);
      }
      sgd_step<float>(ps, gs, state);
      for (const auto* p : ps) {
        if (!p->all_finite()) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches) + ": non-finite parameter after update");
        }
      }
    }
    const double nb = static_cast<double>(batches);
    rec.loss_total /= nb;
    rec.loss_cls /= nb;
    rec.loss_reg /= nb;
    rec.loss_ri /= nb;
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    result.report.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.report.param_total = model.param_total();
  result.report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

MetricsReport evaluate(const Model<float>& model, const Dataset& data, const LossConfig& loss) {
  const auto start = std::chrono::steady_clock::now();
  const ModelSpec& spec = model.spec();
  check_compatible(spec, data);
  loss.validate();

  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double correct = 0.0, ang = 0.0, inv = 0.0;
  Tensor<float> images, targets;
  std::vector<int> labels;
  for (std::size_t first = 0; first < order.size(); first += kEvalBatch) {
    const std::size_t count = std::min(kEvalBatch, order.size() - first);
    make_batch(data, order, first, count, images, labels, targets);
    Tape<float> tape;
    const auto params = model.bind(tape, false);
    const ModelGraph<float> g = model.forward(tape.constant(images), params);
    const Tensor<float>& logits = g.logits.value();
    const Tensor<float>& orient = g.orient.value();
    for (std::size_t i = 0; i < count; ++i) {
      if (argmax_row(logits, i) == static_cast<std::size_t>(labels[i])) correct += 1.0;
      const double pred = std::atan2(static_cast<double>(orient[2 * i]),
                                     static_cast<double>(orient[2 * i + 1]));
      ang += angular_error(pred, data.samples[first + i].orientation);
    }
    const Var<float> turned = rotate_features(g.features, std::numbers::pi / 2);
    const Var<float> ri0 = g.block ? g.block->ri : g.features;
    const Var<float> ri90 = g.block ? model.block(turned, params).ri : turned;
    const Var<float> d = ops::rbf_rows(flatten(ri0), flatten(ri90), loss.sigma,
                                       KernelForm::Distance, kNormFloor);
    for (float v : d.value().data()) inv += static_cast<double>(v);
  }
  const double total = static_cast<double>(order.size());
  MetricsReport r;
  r.accuracy = correct / total;
  r.angular_mae = ang / total;
  r.invariance_score = inv / total;
  r.param_total = model.param_total();
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

GradCheckOptions model_check_options() {
  GradCheckOptions o;
  o.tolerance = 1e-4;
  o.floor = 1e-5;
  o.skip_kinks = true;
  return o;
}

ModelSpec random_check_spec(Rng& rng) {
  ModelSpec s;
  s.channels = {2, 3};
  s.strides = {2, 1};
  s.image_size = 8;
  s.classes = 3;
  s.rfn.n = 2 + rng.below(3);
  s.rfn.insertion_stage = 1 + static_cast<int>(rng.below(2));
  const std::size_t nc = s.rfn.n * s.channels_after(static_cast<std::size_t>(s.rfn.insertion_stage));
  std::vector<std::size_t> ratios{0};
  for (std::size_t r = 1; r <= nc; ++r)
    if (nc % r == 0) ratios.push_back(r);
  s.rfn.r = ratios[rng.below(ratios.size())];
  s.rfn.pooling = rng.below(2) ? PoolMode::Max : PoolMode::Avg;
  s.rfn.resume = rng.below(2) ? ResumeMode::Sum : ResumeMode::Max;
  return s;
}

GradCheckReport grad_check_model(const ModelSpec& spec, const TrainOptions& opts,
                                 std::size_t batch, std::uint64_t seed, double param_std,
                                 const GradCheckOptions& check) {
  ModelSpec local = spec;
  local.init_std = param_std;
  local.backbone_he_init = false;
  Rng rng(seed);
  Model<double> model(local, rng.next());
  for (std::size_t i = 0; i < model.names().size(); ++i) {
    if (!model.names()[i].ends_with(".bias")) continue;
    for (auto& v : model.values()[i].data()) v = rng.uniform(-param_std, param_std);
  }
  const std::size_t s = spec.image_size;
  Tensor<double> images(Shape{batch, s, s, 1});
  for (auto& v : images.data()) v = rng.uniform();
  Tensor<double> targets(Shape{batch, 2});
  std::vector<int> labels(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    labels[b] = static_cast<int>(rng.below(spec.classes));
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    targets[2 * b] = std::sin(theta);
    targets[2 * b + 1] = std::cos(theta);
  }
  const std::uint64_t angle_seed = rng.next();

  std::vector<NamedTensor> point;
  for (std::size_t i = 0; i < model.names().size(); ++i) {
    point.push_back({model.names()[i], model.values()[i]});
  }
  const TapeBuilder build = [&](Tape<double>& tape, const std::vector<Var<double>>& leaves) {
    Rng angles(angle_seed);
    return batch_loss(model, tape, leaves, images, labels, targets, opts, &angles).total;
  };
  return grad_check_tape(point, build, check);
}

std::string metrics_history_csv(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,learning_rate,loss_total,loss_cls,loss_reg,loss_ri,train_accuracy\n";
  for (const auto& e : report.history) {
    os << e.epoch << ',' << e.learning_rate << ',' << e.loss_total << ',' << e.loss_cls << ','
       << e.loss_reg << ',' << e.loss_ri << ',' << e.train_accuracy << '\n';
  }
  return os.str();
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["angular_mae"] = report.angular_mae;
  j["invariance_score"] = report.invariance_score;
  j["param_total"] = report.param_total;
  j["wall_time"] = report.wall_time;
  j["history"] = nlohmann::json::array();
  for (const auto& e : report.history) {
    j["history"].push_back({{"epoch", e.epoch},
                            {"learning_rate", e.learning_rate},
                            {"loss_total", e.loss_total},
                            {"loss_cls", e.loss_cls},
                            {"loss_reg", e.loss_reg},
                            {"loss_ri", e.loss_ri},
                            {"train_accuracy", e.train_accuracy}});
  }
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.accuracy = j.at("accuracy").get<double>();
    r.angular_mae = j.at("angular_mae").get<double>();
    r.invariance_score = j.at("invariance_score").get<double>();
    r.param_total = j.at("param_total").get<std::size_t>();
    r.wall_time = j.at("wall_time").get<double>();
    for (const auto& h : j.at("history")) {
      EpochRecord e;
      e.epoch = h.at("epoch").get<std::size_t>();
      e.learning_rate = h.at("learning_rate").get<double>();
      e.loss_total = h.at("loss_total").get<double>();
      e.loss_cls = h.at("loss_cls").get<double>();
      e.loss_reg = h.at("loss_reg").get<double>();
      e.loss_ri = h.at("loss_ri").get<double>();
      e.train_accuracy = h.at("train_accuracy").get<double>();
      r.history.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics json: ") + e.what());
  }
  return r;
}

template BatchLoss<float> batch_loss<float>(const Model<float>&, Tape<float>&,
                                            const std::vector<Var<float>>&, const Tensor<float>&,
                                            const std::vector<int>&, const Tensor<float>&,
                                            const TrainOptions&, Rng*);
template BatchLoss<double> batch_loss<double>(const Model<double>&, Tape<double>&,
                                              const std::vector<Var<double>>&,
                                              const Tensor<double>&, const std::vector<int>&,
                                              const Tensor<double>&, const TrainOptions&, Rng*);

}  // namespace rfn
