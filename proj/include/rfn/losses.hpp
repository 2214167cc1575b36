#pragma once

// Rotation-invariance metric, task losses and the multitask total.

#include <cstddef>
#include <span>
#include <vector>

#include "rfn/autodiff.hpp"
#include "rfn/modes.hpp"

namespace rfn {

struct LossConfig {
  double sigma = 1.0;         // RBF bandwidth
  bool median_sigma = false;  // per batch: median distance between normalized pairs
  double lambda_reg = 0.2;
  double lambda_ri = 0.5;
  KernelForm form = KernelForm::Distance;

  void validate() const;
};

struct LossReport {
  double cls = 0.0;
  double reg = 0.0;
  double ri = 0.0;
  double total = 0.0;
};

// exp(-|a - b|^2 / (2 sigma^2)).
double rbf_kernel(std::span<const double> a, std::span<const double> b, double sigma);

// 2 (1 - k(a^, b^)) on L2-normalized flattened maps, in [0, 2]; k itself in
// Similarity form.
template <typename T>
double invariance_distance(const Tensor<T>& y0, const Tensor<T>& yr, double sigma,
                           KernelForm form = KernelForm::Distance);

struct RiLoss {
  double value = 0.0;
  bool no_rotations = false;  // set when there were no rotated copies (n = 1)
};

// ri_unrotated[i]: RI of sample i; ri_rotated[i]: its RIs for angles 1..n-1.
// Mean over samples of the distance to the mean rotated RI.
template <typename T>
RiLoss l_ri_star(const std::vector<Tensor<T>>& ri_unrotated,
                 const std::vector<std::vector<Tensor<T>>>& ri_rotated, double sigma,
                 KernelForm form = KernelForm::Distance);

// 1 / (2 N (n-1)) times the sum of per-sample, per-angle distances.
template <typename T>
RiLoss l_ri_full(const std::vector<Tensor<T>>& ri_unrotated,
                 const std::vector<std::vector<Tensor<T>>>& ri_rotated, double sigma,
                 KernelForm form = KernelForm::Distance);

template <typename T>
double classification_loss(const Tensor<T>& logits, const std::vector<int>& labels);

template <typename T>
double regression_loss(const Tensor<T>& pred, const Tensor<T>& target);

LossReport total_loss(double cls, double reg, double ri, const LossConfig& cfg);

// Differentiable forms over batched RIs [B, ...]; `rotated` holds one batch per
// extra angle. An empty `rotated` yields a constant zero.
template <typename T>
Var<T> l_ri_star(Var<T> ri, const std::vector<Var<T>>& rotated, double sigma, KernelForm form,
                 double norm_floor = 0.0);

template <typename T>
Var<T> l_ri_full(Var<T> ri, const std::vector<Var<T>>& rotated, double sigma, KernelForm form);

template <typename T>
Var<T> total_loss(Var<T> cls, Var<T> reg, Var<T> ri, const LossConfig& cfg);

// Median over rows of |a^ - b^|; falls back to 1 when the median is zero.
template <typename T>
double median_bandwidth(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace rfn
