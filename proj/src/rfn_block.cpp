#include "rfn/rfn_block.hpp"

#include <string>

#include "rfn/ops.hpp"
#include "rfn/optim.hpp"

namespace rfn {

void RfnConfig::validate(std::size_t channels) const {
  if (n == 0) throw InvalidArgument("rfn: angle count n must be at least 1");
  if (channels == 0) throw InvalidArgument("rfn: channel count must be positive");
  if (r != 0 && (n * channels) % r != 0) {
    throw InvalidArgument("rfn: reduction ratio r=" + std::to_string(r) +
                          " does not divide n*C=" + std::to_string(n * channels));
  }
  if (insertion_stage < 1) throw InvalidArgument("rfn: insertion_stage must be >= 1");
}

std::size_t param_count(const RfnConfig& cfg, std::size_t channels) {
  cfg.validate(channels);
  const std::size_t width = cfg.n * channels;
  if (cfg.r == 0) return width * cfg.n;
  const std::size_t hidden = width / cfg.r;
  return width * hidden + hidden * cfg.n;
}

template <typename T>
RfnParams<T> RfnParams<T>::zeros(const RfnConfig& cfg, std::size_t channels) {
  cfg.validate(channels);
  RfnParams p;
  const std::size_t width = cfg.n * channels;
  if (cfg.r == 0) {
    p.w1 = Tensor<T>(Shape{width, cfg.n});
  } else {
    const std::size_t hidden = cfg.hidden(channels);
    p.w1 = Tensor<T>(Shape{width, hidden});
    p.w2 = Tensor<T>(Shape{hidden, cfg.n});
  }
  return p;
}

template <typename T>
RfnParams<T> RfnParams<T>::truncated_normal(const RfnConfig& cfg, std::size_t channels,
                                            double stddev, Rng& rng) {
  RfnParams p = zeros(cfg, channels);
  p.w1 = rfn::truncated_normal<T>(p.w1.shape(), stddev, rng);
  if (p.w2) p.w2 = rfn::truncated_normal<T>(p.w2->shape(), stddev, rng);
  return p;
}

template <typename T>
Var<T> attention_weights(Var<T> pooled, const RfnVars<T>& params) {
  if (!params.w2) return ops::sigmoid(ops::linear(pooled, params.w1));
  return ops::sigmoid(ops::linear(ops::relu(ops::linear(pooled, params.w1)), *params.w2));
}

template <typename T>
RfnGraph<T> rfn_apply(Var<T> x, const RfnVars<T>& params, const RfnConfig& cfg) {
  if (x.shape().rank() != 4) throw ShapeError("rfn: expected [B,H,W,C], got " + x.shape().str());
  const std::size_t batch = x.shape()[0], channels = x.shape()[3];
  cfg.validate(channels);
  const std::size_t width = cfg.n * channels;
  if (params.w1.shape()[0] != width) {
    throw ShapeError("rfn: gate input width " + std::to_string(params.w1.shape()[0]) +
                     " does not match n*C=" + std::to_string(width));
  }
  RfnGraph<T> g;
  g.stack = rotate_stack(x, angle_set(cfg.n));
  if (cfg.uniform_weights) {
    g.weights = x.tape->constant(Tensor<T>(Shape{batch, cfg.n}, T{0.5}));
  } else {
    g.weights = attention_weights(ops::global_pool(g.stack, cfg.n, cfg.pooling), params);
    if (g.weights.shape()[1] != cfg.n) {
      throw ShapeError("rfn: gate produces " + std::to_string(g.weights.shape()[1]) +
                       " weights for n=" + std::to_string(cfg.n));
    }
  }
  g.ri = ops::resume(ops::scale_stack(g.weights, g.stack), cfg.n, cfg.resume);
  g.rs = ops::resume(g.stack, cfg.n, cfg.resume);
  return g;
}

namespace {

template <typename T>
RfnVars<T> leaves(Tape<T>& tape, const RfnParams<T>& p) {
  RfnVars<T> v{tape.constant(p.w1), std::nullopt};
  if (p.w2) v.w2 = tape.constant(*p.w2);
  return v;
}

}  // namespace

template <typename T>
Tensor<T> global_pool(const Tensor<T>& m, PoolMode mode) {
  if (m.rank() != 3) throw ShapeError("global_pool: expected H x W x C, got " + m.shape().str());
  Tape<T> tape;
  auto x = tape.constant(m.reshaped(Shape{1, m.dim(0), m.dim(1), m.dim(2)}));
  return ops::global_pool(x, 1, mode).value().reshaped(Shape{m.dim(2)});
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& g, const RfnParams<T>& params) {
  if (g.rank() != 1) throw ShapeError("attention_weights: expected a vector, got " + g.shape().str());
  Tape<T> tape;
  auto w = attention_weights(tape.constant(g.reshaped(Shape{1, g.size()})), leaves(tape, params));
  return w.value().reshaped(Shape{w.value().size()});
}

template <typename T>
Tensor<T> scale_stack(const Tensor<T>& weights, const Tensor<T>& stack) {
  if (stack.rank() != 4) throw ShapeError("scale_stack: expected n x H x W x C, got " + stack.shape().str());
  if (weights.size() != stack.dim(0)) {
    throw ShapeError("scale_stack: " + std::to_string(weights.size()) +
                     " weights for a stack of depth " + std::to_string(stack.dim(0)));
  }
  Tape<T> tape;
  auto w = tape.constant(weights.reshaped(Shape{1, weights.size()}));
  return ops::scale_stack(w, tape.constant(stack)).value();
}

template <typename T>
Tensor<T> resume(const Tensor<T>& stack, ResumeMode mode) {
  if (stack.rank() != 4) throw ShapeError("resume: expected n x H x W x C, got " + stack.shape().str());
  Tape<T> tape;
  auto out = ops::resume(tape.constant(stack), stack.dim(0), mode).value();
  return out.reshaped(Shape{stack.dim(1), stack.dim(2), stack.dim(3)});
}

template <typename T>
RfnOutput<T> rfn_forward(const Tensor<T>& x, const RfnParams<T>& params, const RfnConfig& cfg) {
  if (x.rank() != 3) throw ShapeError("rfn_forward: expected H x W x C, got " + x.shape().str());
  if (x.dim(0) != x.dim(1)) {
    throw InvalidArgument("rfn_forward: spatial extent must be square, got " + x.shape().str());
  }
  Tape<T> tape;
  auto in = tape.constant(x.reshaped(Shape{1, x.dim(0), x.dim(1), x.dim(2)}));
  const auto g = rfn_apply(in, leaves(tape, params), cfg);
  return {g.ri.value().reshaped(x.shape()), g.rs.value().reshaped(x.shape()),
          g.weights.value().reshaped(Shape{cfg.n})};
}

#define RFN_INSTANTIATE_BLOCK(T)                                                           \
  template struct RfnParams<T>;                                                            \
  template Var<T> attention_weights<T>(Var<T>, const RfnVars<T>&);                         \
  template RfnGraph<T> rfn_apply<T>(Var<T>, const RfnVars<T>&, const RfnConfig&);          \
  template Tensor<T> global_pool<T>(const Tensor<T>&, PoolMode);                           \
  template Tensor<T> attention_weights<T>(const Tensor<T>&, const RfnParams<T>&);          \
  template Tensor<T> scale_stack<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> resume<T>(const Tensor<T>&, ResumeMode);                              \
  template RfnOutput<T> rfn_forward<T>(const Tensor<T>&, const RfnParams<T>&, const RfnConfig&);

RFN_INSTANTIATE_BLOCK(float)
RFN_INSTANTIATE_BLOCK(double)

}  // namespace rfn
