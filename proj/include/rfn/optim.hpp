#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rfn/rng.hpp"
#include "rfn/tensor.hpp"

namespace rfn {

// SGD with momentum; weight decay is folded into the gradient (classic L2).
template <typename T>
struct OptState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<Tensor<T>> velocity;  // one per parameter, created on first step
};

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
// A null grad marks a parameter with no gradient path: it is left untouched,
// velocity included.
template <typename T>
void sgd_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads,
              OptState<T>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.velocity.empty()) {
    for (const auto* p : params) state.velocity.emplace_back(p->shape());
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_step: velocity count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    Tensor<T>& v = state.velocity[i];
    if (!(v.shape() == p.shape())) {
      throw ShapeError("sgd_step: velocity " + v.shape().str() + " vs param " + p.shape().str());
    }
    if (grads[i] == nullptr) continue;
    const Tensor<T>& g = *grads[i];
    if (!(g.shape() == p.shape())) {
      throw ShapeError("sgd_step: grad " + g.shape().str() + " vs param " + p.shape().str());
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double vj = state.momentum * static_cast<double>(v[j]) + static_cast<double>(g[j]) +
                        state.weight_decay * static_cast<double>(p[j]);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(static_cast<double>(p[j]) - state.learning_rate * vj);
    }
  }
}

// Mean 0, given stddev, redrawn outside +-2 stddev.
template <typename T>
Tensor<T> truncated_normal(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

}  // namespace rfn
