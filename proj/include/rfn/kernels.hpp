#pragma once

// Data-parallel inner loops behind the differentiable ops.
//
// Every kernel exists twice: kernels::serial is the plain reference and
// kernels::omp is the OpenMP version. Both perform the same floating-point
// operations in the same order for every output element (threads only split
// disjoint outputs), so the two agree bitwise and results do not depend on the
// thread count. The unqualified kernels:: entry points pick one of them.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rfn::kernels {

// Output pixel p of a plane is sum over t < taps[p] of weight[p][t] * in[src[p][t]].
// A pixel with taps == 1 and weight 1 is a plain copy (exact permutation path).
struct GatherMap {
  std::size_t pixels = 0;
  std::vector<std::array<std::uint32_t, 4>> src;
  std::vector<std::array<double, 4>> weight;
  std::vector<std::uint8_t> taps;
  bool exact = false;  // every pixel is a single unit-weight copy or empty
};

struct ConvGeometry {
  std::size_t batch = 1, height = 1, width = 1, in_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1, out_channels = 1;
  std::size_t stride = 1, pad = 0;

  std::size_t out_height() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel_w) / stride + 1; }
};

#define RFN_KERNEL_DECLS                                                                    \
  /* c[M x N] = a[M x K] * b[K x N] */                                                      \
  template <typename T>                                                                     \
  void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,    \
              std::size_t k, std::size_t n);                                                \
  /* c[K x N] = a[M x K]^T * g[M x N] */                                                    \
  template <typename T>                                                                     \
  void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> c,              \
                   std::size_t m, std::size_t k, std::size_t n);                            \
  /* c[M x K] = g[M x N] * b[K x N]^T */                                                    \
  template <typename T>                                                                     \
  void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> c,              \
                   std::size_t m, std::size_t k, std::size_t n);                            \
  template <typename T>                                                                     \
  void conv2d_forward(std::span<const T> x, std::span<const T> kernel, std::span<T> y,      \
                      const ConvGeometry& g);                                               \
  template <typename T>                                                                     \
  void conv2d_backward_input(std::span<const T> gy, std::span<const T> kernel,              \
                             std::span<T> gx, const ConvGeometry& g);                       \
  template <typename T>                                                                     \
  void conv2d_backward_kernel(std::span<const T> x, std::span<const T> gy,                  \
                              std::span<T> gk, const ConvGeometry& g);                      \
  /* planes laid out [batch, pixels, channels]; channels contiguous */                      \
  template <typename T>                                                                     \
  void gather_forward(std::span<const T> in, std::span<T> out, std::size_t batch,           \
                      std::size_t channels, const GatherMap& map);                          \
  template <typename T>                                                                     \
  void gather_backward(std::span<const T> gout, std::span<T> gin, std::size_t batch,        \
                       std::size_t channels, const GatherMap& map);

namespace serial {
RFN_KERNEL_DECLS
}  // namespace serial

namespace omp {
RFN_KERNEL_DECLS
}  // namespace omp

RFN_KERNEL_DECLS

#undef RFN_KERNEL_DECLS

// True when the omp:: variants were compiled with OpenMP enabled.
bool openmp_enabled();
int max_threads();
// Restricts OpenMP kernels on the calling thread (used by concurrent ablation workers).
void set_threads(int n);

}  // namespace rfn::kernels
