#pragma once

// Channel-wise rotation of square feature maps and the rotated stack.
//
// Rotation is counterclockwise about the grid center ((S-1)/2, (S-1)/2) by
// inverse mapping: output pixel (i, j) samples the source at
//   i_s = c + sin(t) (j - c) - cos(t) (c - i)
//   j_s = c + cos(t) (j - c) + sin(t) (c - i)
// Multiples of pi/2 are exact pixel permutations; other angles use bilinear
// interpolation with zero fill outside the source.

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "rfn/autodiff.hpp"
#include "rfn/kernels.hpp"
#include "rfn/tensor.hpp"

namespace rfn {

struct AngleSet {
  std::size_t n = 0;
  std::vector<double> angles;  // angles[k] = k * 2pi / n
};

AngleSet angle_set(std::size_t n);

// Number of quarter turns (0..3) when theta is within 1e-6 (in units of pi/2) of
// a multiple of pi/2.
std::optional<int> quarter_turns(double theta);

// Cached gather map for a size x size plane.
std::shared_ptr<const kernels::GatherMap> rotation_map(std::size_t size, double theta);

std::vector<std::shared_ptr<const kernels::GatherMap>> rotation_maps(std::size_t size,
                                                                     const AngleSet& set);

// plane[H x W] with H == W.
template <typename T>
Tensor<T> rotate_map(const Tensor<T>& plane, double theta);

template <typename T>
struct RotatedStack {
  std::vector<Tensor<T>> per_angle;  // n maps, each H x W x C
  Tensor<T> concatenated;            // H x W x (n*C), angle-major channels
};

// x[H x W x C] with H == W.
template <typename T>
RotatedStack<T> build_rotated_stack(const Tensor<T>& x, const AngleSet& set);

// Differentiable rotation of every plane of x[B,H,W,C].
template <typename T>
Var<T> rotate_features(Var<T> x, double theta);

// Differentiable stack: [B,H,W,C] -> [B*n,H,W,C].
template <typename T>
Var<T> rotate_stack(Var<T> x, const AngleSet& set);

}  // namespace rfn
