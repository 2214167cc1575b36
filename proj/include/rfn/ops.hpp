#pragma once

// Differentiable primitives recorded on a Tape.
//
// Layout conventions: feature maps are [B, H, W, C] (channels last). A rotated
// stack of n angles is folded into the batch axis as [B*n, H, W, C] with slab
// (b, k) at index b*n + k, so a per-sample channel concatenation over angles is
// angle-major: channel k*C + c.

#include <cstddef>
#include <memory>
#include <vector>

#include "rfn/autodiff.hpp"
#include "rfn/kernels.hpp"
#include "rfn/modes.hpp"

namespace rfn::ops {

using MapPtr = std::shared_ptr<const kernels::GatherMap>;

// x[B x Din] * w[Din x Dout], no bias.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);

// Adds b[C] along the last axis.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b);

// Cross-correlation, x[B,H,W,Cin], k[kh,kw,Cin,Cout].
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t pad);

template <typename T>
Var<T> activation(Var<T> x, Activation mode);

template <typename T>
Var<T> relu(Var<T> x) { return activation(x, Activation::Relu); }

template <typename T>
Var<T> sigmoid(Var<T> x) { return activation(x, Activation::Sigmoid); }

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// Applies one spatial gather map to every (batch, channel) plane of x[B,H,W,C].
template <typename T>
Var<T> gather_planes(Var<T> x, MapPtr map);

// [B,H,W,C] -> [B*n,H,W,C]; slab (b, k) is x[b] mapped through maps[k].
template <typename T>
Var<T> rotated_stack(Var<T> x, const std::vector<MapPtr>& maps);

// [B*n,H,W,C] -> [B, n*C]. Max mode routes the gradient to the first maximum
// in row-major scan order.
template <typename T>
Var<T> global_pool(Var<T> stack, std::size_t n, PoolMode mode);

// weights[B, n], stack[B*n,H,W,C] -> weights[b,k] * stack[b*n+k].
template <typename T>
Var<T> scale_stack(Var<T> weights, Var<T> stack);

// [B*n,H,W,C] -> [B,H,W,C], reducing over the angle axis. Max mode routes the
// gradient to the lowest angle index attaining the maximum.
template <typename T>
Var<T> resume(Var<T> stack, std::size_t n, ResumeMode mode);

// Elementwise mean of equally shaped operands.
template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs);

// Mean of softmax cross-entropy over rows of logits[B x K].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels);

// Mean smooth-L1 of (pred - target) over all elements.
template <typename T>
Var<T> smooth_l1(Var<T> pred, const Tensor<T>& target);

// Per-row kernel term between L2-normalized rows of a and b (first axis is the
// batch), giving [B]: 2(1 - k) in Distance form, k in Similarity form, with
// k = exp(-|a^ - b^|^2 / (2 sigma^2)). With norm_floor == 0 an all-zero row is
// an error; otherwise row norms are clamped below at norm_floor.
template <typename T>
Var<T> rbf_rows(Var<T> a, Var<T> b, double sigma, KernelForm form, double norm_floor = 0.0);

// Mean over all elements -> scalar.
template <typename T>
Var<T> mean(Var<T> x);

// sum_i coeffs[i] * xs[i] over scalars.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<double>& coeffs);

// sum(x * r) for a constant r; used to project tensors onto scalars in checks.
template <typename T>
Var<T> project(Var<T> x, const Tensor<T>& r);

}  // namespace rfn::ops
