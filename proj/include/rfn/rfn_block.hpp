#pragma once

// The rotated feature block: rotate the input channel-wise at n angles, weight
// each angle with a gate computed from the globally pooled stack, and resume
// the stack back to the input shape twice: the weighted stack gives the
// rotation-invariant map (RI), the unweighted one the rotation-sensitive map (RS).

#include <cstddef>
#include <optional>

#include "rfn/autodiff.hpp"
#include "rfn/modes.hpp"
#include "rfn/rng.hpp"
#include "rfn/rotation.hpp"

namespace rfn {

struct RfnConfig {
  std::size_t n = 4;      // angle count
  std::size_t r = 8;      // reduction ratio; 0 drops the bottleneck layer
  PoolMode pooling = PoolMode::Max;
  ResumeMode resume = ResumeMode::Sum;
  int insertion_stage = 2;       // backbone stage the block follows (1-based)
  bool uniform_weights = false;  // gate fixed at 0.5 for every angle

  // Throws InvalidArgument unless the config can be instantiated on C channels.
  void validate(std::size_t channels) const;
  std::size_t hidden(std::size_t channels) const { return r == 0 ? 0 : n * channels / r; }
};

// Learnable gate weights. With r > 0: w1[(nC) x (nC/r)], w2[(nC/r) x n].
// With r == 0 a single w1[(nC) x n] and no w2.
template <typename T>
struct RfnParams {
  Tensor<T> w1;
  std::optional<Tensor<T>> w2;

  static RfnParams zeros(const RfnConfig& cfg, std::size_t channels);
  static RfnParams truncated_normal(const RfnConfig& cfg, std::size_t channels, double stddev,
                                    Rng& rng);
  std::size_t count() const { return w1.size() + (w2 ? w2->size() : 0); }
};

template <typename T>
struct RfnOutput {
  Tensor<T> ri;       // H x W x C
  Tensor<T> rs;       // H x W x C
  Tensor<T> weights;  // n
};

std::size_t param_count(const RfnConfig& cfg, std::size_t channels);

// Per-sample entry points (unbatched).
template <typename T>
Tensor<T> global_pool(const Tensor<T>& m, PoolMode mode);  // [H,W,nC] -> [nC]
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& g, const RfnParams<T>& params);  // [nC] -> [n]
template <typename T>
Tensor<T> scale_stack(const Tensor<T>& weights, const Tensor<T>& stack);  // [n],[n,H,W,C]
template <typename T>
Tensor<T> resume(const Tensor<T>& stack, ResumeMode mode);  // [n,H,W,C] -> [H,W,C]
template <typename T>
RfnOutput<T> rfn_forward(const Tensor<T>& x, const RfnParams<T>& params, const RfnConfig& cfg);

// Batched, differentiable form.
template <typename T>
struct RfnVars {
  Var<T> w1;
  std::optional<Var<T>> w2;
};

template <typename T>
struct RfnGraph {
  Var<T> stack;    // [B*n,H,W,C]
  Var<T> weights;  // [B,n]
  Var<T> ri;       // [B,H,W,C]
  Var<T> rs;       // [B,H,W,C]
};

template <typename T>
Var<T> attention_weights(Var<T> pooled, const RfnVars<T>& params);  // [B,nC] -> [B,n]

template <typename T>
RfnGraph<T> rfn_apply(Var<T> x, const RfnVars<T>& params, const RfnConfig& cfg);

}  // namespace rfn
