#pragma once

// Central-difference verification of analytic gradients (64-bit).

#include <functional>
#include <string>
#include <vector>

#include "rfn/autodiff.hpp"

namespace rfn {

struct NamedTensor {
  std::string name;
  Tensor<double> value;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // coordinates excluded as non-differentiable
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  bool passed = true;

  std::string summary() const;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-6;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  // Near-zero components then pass on an absolute error below tolerance *
  // floor (1e-10 by default), which is the round-off level of a central
  // difference at eps = 1e-5 on a loss of order one.
  double floor = 1e-4;
  // Excludes coordinates whose stencil crosses a kink (relu, max): the analytic
  // value must match one one-sided difference within kink_match, and the two
  // one-sided differences must disagree by more. Such coordinates are counted
  // instead of compared.
  bool skip_kinks = false;
  double kink_match = 1e-3;
};

// Compares `analytic` (one tensor per point entry) against central differences
// of the scalar map f around `point`. Throws NumericError naming the parameter
// when f is non-finite at a perturbed point.
GradCheckReport grad_check(std::vector<NamedTensor> point,
                           const std::function<double(const std::vector<NamedTensor>&)>& f,
                           const std::vector<Tensor<double>>& analytic,
                           const GradCheckOptions& opts = {});

// Builds the scalar on a fresh tape from leaves holding the point's values.
using TapeBuilder =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Analytic gradients from one backward pass of `build`, then grad_check.
GradCheckReport grad_check_tape(const std::vector<NamedTensor>& point, const TapeBuilder& build,
                                const GradCheckOptions& opts = {});

// Evaluates `build` and returns (value, gradients per point entry).
std::pair<double, std::vector<Tensor<double>>> tape_value_and_grad(
    const std::vector<NamedTensor>& point, const TapeBuilder& build);

}  // namespace rfn
