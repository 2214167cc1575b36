// Reference kernels: straightforward loops, one output element at a time.

#include "rfn/kernels.hpp"

#include "kernels_instantiate.hpp"

#include <algorithm>

namespace rfn::kernels::serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      c[p * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      c[i * k + p] = acc;
    }
  }
}

namespace {

// Input coordinate for output coordinate o and kernel tap t; false when in padding.
bool source_coord(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad,
                  std::size_t extent, std::size_t& out) {
  const std::ptrdiff_t v = static_cast<std::ptrdiff_t>(o * stride + t) -
                           static_cast<std::ptrdiff_t>(pad);
  if (v < 0 || v >= static_cast<std::ptrdiff_t>(extent)) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

}  // namespace

template <typename T>
void conv2d_forward(std::span<const T> x, std::span<const T> kernel, std::span<T> y,
                    const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T acc{0};
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            std::size_t iy;
            if (!source_coord(oy, ky, g.stride, g.pad, g.height, iy)) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              std::size_t ix;
              if (!source_coord(ox, kx, g.stride, g.pad, g.width, ix)) continue;
              for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                acc += x[((b * g.height + iy) * g.width + ix) * g.in_channels + ci] *
                       kernel[((ky * g.kernel_w + kx) * g.in_channels + ci) * g.out_channels +
                              co];
              }
            }
          }
          y[((b * ho + oy) * wo + ox) * g.out_channels + co] = acc;
        }
}

template <typename T>
void conv2d_backward_input(std::span<const T> gy, std::span<const T> kernel, std::span<T> gx,
                           const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t iy = 0; iy < g.height; ++iy)
      for (std::size_t ix = 0; ix < g.width; ++ix)
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          T acc{0};
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t ky = static_cast<std::ptrdiff_t>(iy + g.pad) -
                                      static_cast<std::ptrdiff_t>(oy * g.stride);
            if (ky < 0 || ky >= static_cast<std::ptrdiff_t>(g.kernel_h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t kx = static_cast<std::ptrdiff_t>(ix + g.pad) -
                                        static_cast<std::ptrdiff_t>(ox * g.stride);
              if (kx < 0 || kx >= static_cast<std::ptrdiff_t>(g.kernel_w)) continue;
              T dot{0};
              for (std::size_t co = 0; co < g.out_channels; ++co) {
                dot += gy[((b * ho + oy) * wo + ox) * g.out_channels + co] *
                       kernel[((static_cast<std::size_t>(ky) * g.kernel_w +
                                static_cast<std::size_t>(kx)) *
                                   g.in_channels +
                               ci) *
                                  g.out_channels +
                              co];
              }
              acc += dot;
            }
          }
          gx[((b * g.height + iy) * g.width + ix) * g.in_channels + ci] = acc;
        }
}

template <typename T>
void conv2d_backward_kernel(std::span<const T> x, std::span<const T> gy, std::span<T> gk,
                            const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
      for (std::size_t ci = 0; ci < g.in_channels; ++ci)
        for (std::size_t co = 0; co < g.out_channels; ++co) {
          T acc{0};
          for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t oy = 0; oy < ho; ++oy) {
              std::size_t iy;
              if (!source_coord(oy, ky, g.stride, g.pad, g.height, iy)) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                std::size_t ix;
                if (!source_coord(ox, kx, g.stride, g.pad, g.width, ix)) continue;
                acc += x[((b * g.height + iy) * g.width + ix) * g.in_channels + ci] *
                       gy[((b * ho + oy) * wo + ox) * g.out_channels + co];
              }
            }
          gk[((ky * g.kernel_w + kx) * g.in_channels + ci) * g.out_channels + co] = acc;
        }
}

template <typename T>
void gather_forward(std::span<const T> in, std::span<T> out, std::size_t batch,
                    std::size_t channels, const GatherMap& map) {
  const std::size_t plane = map.pixels * channels;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < map.pixels; ++p)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = b * plane + c;
        const auto taps = map.taps[p];
        if (taps == 1 && map.weight[p][0] == 1.0) {
          out[base + p * channels] = in[base + map.src[p][0] * channels];
          continue;
        }
        T acc{0};
        for (std::size_t t = 0; t < taps; ++t) {
          acc += static_cast<T>(map.weight[p][t]) * in[base + map.src[p][t] * channels];
        }
        out[base + p * channels] = acc;
      }
}

template <typename T>
void gather_backward(std::span<const T> gout, std::span<T> gin, std::size_t batch,
                     std::size_t channels, const GatherMap& map) {
  std::fill(gin.begin(), gin.end(), T{0});
  const std::size_t plane = map.pixels * channels;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < map.pixels; ++p)
      for (std::size_t t = 0; t < map.taps[p]; ++t)
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t base = b * plane + c;
          if (map.taps[p] == 1 && map.weight[p][0] == 1.0) {
            gin[base + map.src[p][0] * channels] += gout[base + p * channels];
          } else {
            gin[base + map.src[p][t] * channels] +=
                static_cast<T>(map.weight[p][t]) * gout[base + p * channels];
          }
        }
}

RFN_INSTANTIATE(float)
RFN_INSTANTIATE(double)

}  // namespace rfn::kernels::serial
