// OpenMP kernels. Threads split disjoint output rows; the per-element
// accumulation order matches kernels::serial exactly.

#include "rfn/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels_instantiate.hpp"

namespace rfn::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

using Index = std::ptrdiff_t;

}  // namespace

namespace omp {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    T* row = c.data() + static_cast<std::size_t>(i) * n;
    std::fill(row, row + n, T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[static_cast<std::size_t>(i) * k + p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (Index p = 0; p < static_cast<Index>(k); ++p) {
    T* row = c.data() + static_cast<std::size_t>(p) * n;
    std::fill(row, row + n, T{0});
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[i * k + static_cast<std::size_t>(p)];
      const T* grow = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * grow[j];
    }
  }
}

template <typename T>
void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    const T* grow = g.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b.data() + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[static_cast<std::size_t>(i) * k + p] = acc;
    }
  }
}

template <typename T>
void conv2d_forward(std::span<const T> x, std::span<const T> kernel, std::span<T> y,
                    const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const std::size_t work = g.batch * ho * wo * g.kernel_h * g.kernel_w * cin * cout;
  const Index rows = static_cast<Index>(g.batch * ho);
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (Index r = 0; r < rows; ++r) {
    const std::size_t b = static_cast<std::size_t>(r) / ho;
    const std::size_t oy = static_cast<std::size_t>(r) % ho;
    for (std::size_t ox = 0; ox < wo; ++ox) {
      T* out = y.data() + ((b * ho + oy) * wo + ox) * cout;
      std::fill(out, out + cout, T{0});
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
        if (iy < 0 || iy >= static_cast<Index>(g.height)) continue;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
          if (ix < 0 || ix >= static_cast<Index>(g.width)) continue;
          const T* xin = x.data() + ((b * g.height + static_cast<std::size_t>(iy)) * g.width +
                                     static_cast<std::size_t>(ix)) *
                                        cin;
          const T* kin = kernel.data() + (ky * g.kernel_w + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T xv = xin[ci];
            const T* krow = kin + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) out[co] += xv * krow[co];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(std::span<const T> gy, std::span<const T> kernel, std::span<T> gx,
                           const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const std::size_t plane = g.height * g.width * cin;
  const std::size_t work = g.batch * ho * wo * g.kernel_h * g.kernel_w * cin * cout;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (Index bi = 0; bi < static_cast<Index>(g.batch); ++bi) {
    const std::size_t b = static_cast<std::size_t>(bi);
    T* gxb = gx.data() + b * plane;
    std::fill(gxb, gxb + plane, T{0});
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const T* grad = gy.data() + ((b * ho + oy) * wo + ox) * cout;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
          if (iy < 0 || iy >= static_cast<Index>(g.height)) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const Index ix =
                static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
            if (ix < 0 || ix >= static_cast<Index>(g.width)) continue;
            T* dst = gxb + (static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)) * cin;
            const T* kin = kernel.data() + (ky * g.kernel_w + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T* krow = kin + ci * cout;
              T dot{0};
              for (std::size_t co = 0; co < cout; ++co) dot += grad[co] * krow[co];
              dst[ci] += dot;
            }
          }
        }
      }
  }
}

template <typename T>
void conv2d_backward_kernel(std::span<const T> x, std::span<const T> gy, std::span<T> gk,
                            const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const std::size_t work = g.batch * ho * wo * g.kernel_h * g.kernel_w * cin * cout;
  const Index rows = static_cast<Index>(g.kernel_h * g.kernel_w * cin);
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (Index r = 0; r < rows; ++r) {
    const std::size_t ci = static_cast<std::size_t>(r) % cin;
    const std::size_t kx = (static_cast<std::size_t>(r) / cin) % g.kernel_w;
    const std::size_t ky = static_cast<std::size_t>(r) / (cin * g.kernel_w);
    T* row = gk.data() + static_cast<std::size_t>(r) * cout;
    std::fill(row, row + cout, T{0});
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.pad);
        if (iy < 0 || iy >= static_cast<Index>(g.height)) continue;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const Index ix = static_cast<Index>(ox * g.stride + kx) - static_cast<Index>(g.pad);
          if (ix < 0 || ix >= static_cast<Index>(g.width)) continue;
          const T xv = x[((b * g.height + static_cast<std::size_t>(iy)) * g.width +
                          static_cast<std::size_t>(ix)) *
                             cin +
                         ci];
          const T* grad = gy.data() + ((b * ho + oy) * wo + ox) * cout;
          for (std::size_t co = 0; co < cout; ++co) row[co] += xv * grad[co];
        }
      }
  }
}

template <typename T>
void gather_forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                    std::size_t channels, const GatherMap& map) {
  const std::size_t plane = map.pixels * channels;
#pragma omp parallel for schedule(static) if (batch * plane * 4 >= kParallelWork)
  for (Index bi = 0; bi < static_cast<Index>(batch); ++bi) {
    const T* src = in.data() + static_cast<std::size_t>(bi) * plane;
    T* dst = out.data() + static_cast<std::size_t>(bi) * plane;
    for (std::size_t p = 0; p < map.pixels; ++p) {
      T* o = dst + p * channels;
      const auto taps = map.taps[p];
      if (taps == 1 && map.weight[p][0] == 1.0) {
        const T* s = src + map.src[p][0] * channels;
        std::copy(s, s + channels, o);
        continue;
      }
      std::fill(o, o + channels, T{0});
      for (std::size_t t = 0; t < taps; ++t) {
        const T w = static_cast<T>(map.weight[p][t]);
        const T* s = src + map.src[p][t] * channels;
        for (std::size_t c = 0; c < channels; ++c) o[c] += w * s[c];
      }
    }
  }
}

template <typename T>
void gather_backward(std::span<const T> gout, std::span<T> gin, std::size_t batch,
                     std::size_t channels, const GatherMap& map) {
  const std::size_t plane = map.pixels * channels;
#pragma omp parallel for schedule(static) if (batch * plane * 4 >= kParallelWork)
  for (Index bi = 0; bi < static_cast<Index>(batch); ++bi) {
    const T* g = gout.data() + static_cast<std::size_t>(bi) * plane;
    T* dst = gin.data() + static_cast<std::size_t>(bi) * plane;
    std::fill(dst, dst + plane, T{0});
    for (std::size_t p = 0; p < map.pixels; ++p) {
      const T* go = g + p * channels;
      const auto taps = map.taps[p];
      if (taps == 1 && map.weight[p][0] == 1.0) {
        T* d = dst + map.src[p][0] * channels;
        for (std::size_t c = 0; c < channels; ++c) d[c] += go[c];
        continue;
      }
      for (std::size_t t = 0; t < taps; ++t) {
        const T w = static_cast<T>(map.weight[p][t]);
        T* d = dst + map.src[p][t] * channels;
        for (std::size_t c = 0; c < channels; ++c) d[c] += w * go[c];
      }
    }
  }
}

RFN_INSTANTIATE(float)
RFN_INSTANTIATE(double)

}  // namespace omp

// Dispatch. Both variants agree bitwise, so routing everything through the
// OpenMP path is safe; it degrades to serial execution with one thread.
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  omp::matmul(a, b, c, m, k, n);
}
template <typename T>
void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  omp::matmul_at_b(a, g, c, m, k, n);
}
template <typename T>
void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  omp::matmul_a_bt(g, b, c, m, k, n);
}
template <typename T>
void conv2d_forward(std::span<const T> x, std::span<const T> kernel, std::span<T> y,
                    const ConvGeometry& g) {
  omp::conv2d_forward(x, kernel, y, g);
}
template <typename T>
void conv2d_backward_input(std::span<const T> gy, std::span<const T> kernel, std::span<T> gx,
                           const ConvGeometry& g) {
  omp::conv2d_backward_input(gy, kernel, gx, g);
}
template <typename T>
void conv2d_backward_kernel(std::span<const T> x, std::span<const T> gy, std::span<T> gk,
                            const ConvGeometry& g) {
  omp::conv2d_backward_kernel(x, gy, gk, g);
}
template <typename T>
void gather_forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                    std::size_t channels, const GatherMap& map) {
  omp::gather_forward(in, out, batch, channels, map);
}
template <typename T>
void gather_backward(std::span<const T> gout, std::span<T> gin, std::size_t batch,
                     std::size_t channels, const GatherMap& map) {
  omp::gather_backward(gout, gin, batch, channels, map);
}

RFN_INSTANTIATE(float)
RFN_INSTANTIATE(double)

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n < 1 ? 1 : n);
#else
  (void)n;
#endif
}

}  // namespace rfn::kernels
