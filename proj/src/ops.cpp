#include "rfn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rfn::ops {

namespace {

template <typename T>
void require_rank(const Var<T>& v, int rank, const char* op) {
  if (v.shape().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     v.shape().str());
  }
}

template <typename T>
T stable_sigmoid(T x) {
  T s;
  if (x >= T{0}) {
    s = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    s = e / (T{1} + e);
  }
  // Keep the result strictly inside (0, 1) even where it rounds to an endpoint.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
  return std::clamp(s, lo, hi);
}

}  // namespace

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t b = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
  if (w.shape()[0] != din) {
    throw ShapeError("linear: inner dimensions disagree: x " + x.shape().str() + " vs W " +
                     w.shape().str());
  }
  Tensor<T> y(Shape{b, dout});
  kernels::matmul<T>(x.value().data(), w.value().data(), y.data(), b, din, dout);
  const std::size_t xi = x.id, wi = w.id;
  return x.tape->record(std::move(y), {x, w}, "linear",
                        [xi, wi, b, din, dout](Tape<T>& t, const Tensor<T>& g) {
                          if (t.requires_grad(xi)) {
                            Tensor<T> gx(Shape{b, din});
                            kernels::matmul_a_bt<T>(g.data(), t.value(wi).data(), gx.data(), b,
                                                    din, dout);
                            t.accumulate(xi, gx.data());
                          }
                          if (t.requires_grad(wi)) {
                            Tensor<T> gw(Shape{din, dout});
                            kernels::matmul_at_b<T>(t.value(xi).data(), g.data(), gw.data(), b,
                                                    din, dout);
                            t.accumulate(wi, gw.data());
                          }
                        });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  require_rank(b, 1, "add_bias");
  const std::size_t c = b.shape()[0];
  if (x.shape().rank() == 0 || x.shape()[x.shape().rank() - 1] != c) {
    throw ShapeError("add_bias: last axis of " + x.shape().str() + " does not match bias " +
                     b.shape().str());
  }
  Tensor<T> y = x.value();
  const auto bv = b.value().data();
  auto yv = y.data();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += bv[i % c];
  const std::size_t xi = x.id, bi = b.id;
  return x.tape->record(std::move(y), {x, b}, "add_bias",
                        [xi, bi, c](Tape<T>& t, const Tensor<T>& g) {
                          t.accumulate(xi, g.data());
                          if (t.requires_grad(bi)) {
                            auto& gb = t.grad_buffer(bi);
                            const auto gv = g.data();
                            for (std::size_t i = 0; i < gv.size(); ++i) gb[i % c] += gv[i];
                          }
                        });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv2d");
  require_rank(k, 4, "conv2d");
  kernels::ConvGeometry geo;
  geo.batch = x.shape()[0];
  geo.height = x.shape()[1];
  geo.width = x.shape()[2];
  geo.in_channels = x.shape()[3];
  geo.kernel_h = k.shape()[0];
  geo.kernel_w = k.shape()[1];
  geo.out_channels = k.shape()[3];
  geo.stride = stride;
  geo.pad = pad;
  if (k.shape()[2] != geo.in_channels) {
    throw ShapeError("conv2d: channel mismatch: input " + x.shape().str() + " vs kernel " +
                     k.shape().str());
  }
  if (geo.kernel_h % 2 == 0 || geo.kernel_w % 2 == 0) {
    throw InvalidArgument("conv2d: kernel extents must be odd, got " + k.shape().str());
  }
  if (stride == 0) throw InvalidArgument("conv2d: stride must be positive");
  if (geo.height + 2 * pad < geo.kernel_h || geo.width + 2 * pad < geo.kernel_w) {
    throw ShapeError("conv2d: kernel " + k.shape().str() + " larger than padded input " +
                     x.shape().str());
  }
  Tensor<T> y(Shape{geo.batch, geo.out_height(), geo.out_width(), geo.out_channels});
  kernels::conv2d_forward<T>(x.value().data(), k.value().data(), y.data(), geo);
  const std::size_t xi = x.id, ki = k.id;
  return x.tape->record(std::move(y), {x, k}, "conv2d",
                        [xi, ki, geo](Tape<T>& t, const Tensor<T>& g) {
                          if (t.requires_grad(xi)) {
                            Tensor<T> gx(t.value(xi).shape());
                            kernels::conv2d_backward_input<T>(g.data(), t.value(ki).data(),
                                                              gx.data(), geo);
                            t.accumulate(xi, gx.data());
                          }
                          if (t.requires_grad(ki)) {
                            Tensor<T> gk(t.value(ki).shape());
                            kernels::conv2d_backward_kernel<T>(t.value(xi).data(), g.data(),
                                                               gk.data(), geo);
                            t.accumulate(ki, gk.data());
                          }
                        });
}

template <typename T>
Var<T> activation(Var<T> x, Activation mode) {
  Tensor<T> y = x.value();
  auto yv = y.data();
  if (mode == Activation::Relu) {
    for (auto& v : yv) v = v > T{0} ? v : T{0};
  } else {
    for (auto& v : yv) v = stable_sigmoid(v);
  }
  const std::size_t xi = x.id;
  const std::size_t yi = x.tape->size();
  return x.tape->record(
      std::move(y), {x}, mode == Activation::Relu ? "relu" : "sigmoid",
      [xi, yi, mode](Tape<T>& t, const Tensor<T>& g) {
        auto& gx = t.grad_buffer(xi);
        const auto gv = g.data();
        if (mode == Activation::Relu) {
          const auto xv = t.value(xi).data();
          for (std::size_t i = 0; i < gv.size(); ++i)
            if (xv[i] > T{0}) gx[i] += gv[i];
        } else {
          const auto sv = t.value(yi).data();
          for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * sv[i] * (T{1} - sv[i]);
        }
      });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value().reshaped(shape);
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, "reshape",
                        [xi](Tape<T>& t, const Tensor<T>& g) { t.accumulate(xi, g.data()); });
}

template <typename T>
Var<T> gather_planes(Var<T> x, MapPtr map) {
  require_rank(x, 4, "gather_planes");
  const std::size_t b = x.shape()[0], c = x.shape()[3];
  if (x.shape()[1] * x.shape()[2] != map->pixels) {
    throw ShapeError("gather_planes: map covers " + std::to_string(map->pixels) +
                     " pixels, input is " + x.shape().str());
  }
  Tensor<T> y(x.shape());
  kernels::gather_forward<T>(x.value().data(), y.data(), b, c, *map);
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, "gather_planes",
                        [xi, map, b, c](Tape<T>& t, const Tensor<T>& g) {
                          Tensor<T> gx(g.shape());
                          kernels::gather_backward<T>(g.data(), gx.data(), b, c, *map);
                          t.accumulate(xi, gx.data());
                        });
}

template <typename T>
Var<T> rotated_stack(Var<T> x, const std::vector<MapPtr>& maps) {
  require_rank(x, 4, "rotated_stack");
  const std::size_t n = maps.size();
  if (n == 0) throw InvalidArgument("rotated_stack: empty angle set");
  const Shape& s = x.shape();
  const std::size_t b = s[0], h = s[1], w = s[2], c = s[3];
  const std::size_t slab = h * w * c;
  for (const auto& m : maps) {
    if (m->pixels != h * w) {
      throw ShapeError("rotated_stack: map covers " + std::to_string(m->pixels) +
                       " pixels, input is " + s.str());
    }
  }
  Tensor<T> y(Shape{b * n, h, w, c});
  Tensor<T> tmp(s);
  for (std::size_t k = 0; k < n; ++k) {
    kernels::gather_forward<T>(x.value().data(), tmp.data(), b, c, *maps[k]);
    for (std::size_t bi = 0; bi < b; ++bi) {
      std::copy_n(tmp.ptr() + bi * slab, slab, y.ptr() + (bi * n + k) * slab);
    }
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, "rotated_stack",
                        [xi, maps, s, n, slab](Tape<T>& t, const Tensor<T>& g) {
                          const std::size_t b = s[0], c = s[3];
                          Tensor<T> gk(s), gx(s);
                          for (std::size_t k = 0; k < n; ++k) {
                            for (std::size_t bi = 0; bi < b; ++bi) {
                              std::copy_n(g.ptr() + (bi * n + k) * slab, slab,
                                          gk.ptr() + bi * slab);
                            }
                            kernels::gather_backward<T>(gk.data(), gx.data(), b, c, *maps[k]);
                            t.accumulate(xi, gx.data());
                          }
                        });
}

template <typename T>
Var<T> global_pool(Var<T> stack, std::size_t n, PoolMode mode) {
  require_rank(stack, 4, "global_pool");
  const Shape& s = stack.shape();
  if (n == 0 || s[0] % n != 0) {
    throw ShapeError("global_pool: stack depth " + std::to_string(s[0]) +
                     " is not a multiple of n=" + std::to_string(n));
  }
  const std::size_t slabs = s[0], pixels = s[1] * s[2], c = s[3];
  Tensor<T> y(Shape{slabs / n, n * c});
  std::vector<std::size_t> argmax;
  const T* in = stack.value().ptr();
  if (mode == PoolMode::Max) {
    argmax.resize(slabs * c);
    for (std::size_t sl = 0; sl < slabs; ++sl)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = 0;
        T v = in[sl * pixels * c + ch];
        for (std::size_t p = 1; p < pixels; ++p) {
          const T cand = in[(sl * pixels + p) * c + ch];
          if (cand > v) {
            v = cand;
            best = p;
          }
        }
        y[sl * c + ch] = v;
        argmax[sl * c + ch] = best;
      }
  } else {
    for (std::size_t sl = 0; sl < slabs; ++sl)
      for (std::size_t ch = 0; ch < c; ++ch) {
        T acc{0};
        for (std::size_t p = 0; p < pixels; ++p) acc += in[(sl * pixels + p) * c + ch];
        y[sl * c + ch] = acc / static_cast<T>(pixels);
      }
  }
  const std::size_t si = stack.id;
  return stack.tape->record(
      std::move(y), {stack}, "global_pool",
      [si, mode, slabs, pixels, c, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& g) {
        auto& gs = t.grad_buffer(si);
        for (std::size_t sl = 0; sl < slabs; ++sl)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const T gv = g[sl * c + ch];
            if (mode == PoolMode::Max) {
              gs[(sl * pixels + argmax[sl * c + ch]) * c + ch] += gv;
            } else {
              const T share = gv / static_cast<T>(pixels);
              for (std::size_t p = 0; p < pixels; ++p) gs[(sl * pixels + p) * c + ch] += share;
            }
          }
      });
}

template <typename T>
Var<T> scale_stack(Var<T> weights, Var<T> stack) {
  require_rank(weights, 2, "scale_stack");
  const std::size_t slabs = stack.shape().rank() > 0 ? stack.shape()[0] : 0;
  if (weights.value().size() != slabs) {
    throw ShapeError("scale_stack: weights " + weights.shape().str() +
                     " do not match stack depth of " + stack.shape().str());
  }
  const std::size_t slab = stack.value().size() / slabs;
  Tensor<T> y = stack.value();
  for (std::size_t s = 0; s < slabs; ++s) {
    const T w = weights.value()[s];
    T* row = y.ptr() + s * slab;
    for (std::size_t i = 0; i < slab; ++i) row[i] *= w;
  }
  const std::size_t wi = weights.id, si = stack.id;
  return stack.tape->record(std::move(y), {weights, stack}, "scale_stack",
                            [wi, si, slabs, slab](Tape<T>& t, const Tensor<T>& g) {
                              const bool need_w = t.requires_grad(wi);
                              const bool need_s = t.requires_grad(si);
                              for (std::size_t s = 0; s < slabs; ++s) {
                                const T* gr = g.ptr() + s * slab;
                                if (need_w) {
                                  const T* sv = t.value(si).ptr() + s * slab;
                                  T acc{0};
                                  for (std::size_t i = 0; i < slab; ++i) acc += gr[i] * sv[i];
                                  t.grad_buffer(wi)[s] += acc;
                                }
                                if (need_s) {
                                  const T w = t.value(wi)[s];
                                  T* gs = t.grad_buffer(si).ptr() + s * slab;
                                  for (std::size_t i = 0; i < slab; ++i) gs[i] += w * gr[i];
                                }
                              }
                            });
}

template <typename T>
Var<T> resume(Var<T> stack, std::size_t n, ResumeMode mode) {
  require_rank(stack, 4, "resume");
  const Shape& s = stack.shape();
  if (n == 0 || s[0] == 0) throw InvalidArgument("resume: empty stack");
  if (s[0] % n != 0) {
    throw ShapeError("resume: stack depth " + std::to_string(s[0]) +
                     " is not a multiple of n=" + std::to_string(n));
  }
  const std::size_t b = s[0] / n, slab = s[1] * s[2] * s[3];
  Tensor<T> y(Shape{b, s[1], s[2], s[3]});
  std::vector<std::uint32_t> argmax;
  const T* in = stack.value().ptr();
  if (mode == ResumeMode::Max) argmax.assign(b * slab, 0);
  for (std::size_t bi = 0; bi < b; ++bi) {
    T* out = y.ptr() + bi * slab;
    std::copy_n(in + bi * n * slab, slab, out);
    for (std::size_t k = 1; k < n; ++k) {
      const T* sl = in + (bi * n + k) * slab;
      if (mode == ResumeMode::Sum) {
        for (std::size_t i = 0; i < slab; ++i) out[i] += sl[i];
      } else {
        for (std::size_t i = 0; i < slab; ++i) {
          if (sl[i] > out[i]) {
            out[i] = sl[i];
            argmax[bi * slab + i] = static_cast<std::uint32_t>(k);
          }
        }
      }
    }
  }
  const std::size_t si = stack.id;
  return stack.tape->record(
      std::move(y), {stack}, "resume",
      [si, n, b, slab, mode, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& g) {
        auto& gs = t.grad_buffer(si);
        for (std::size_t bi = 0; bi < b; ++bi) {
          const T* gr = g.ptr() + bi * slab;
          if (mode == ResumeMode::Sum) {
            for (std::size_t k = 0; k < n; ++k) {
              T* dst = gs.ptr() + (bi * n + k) * slab;
              for (std::size_t i = 0; i < slab; ++i) dst[i] += gr[i];
            }
          } else {
            for (std::size_t i = 0; i < slab; ++i) {
              gs[(bi * n + argmax[bi * slab + i]) * slab + i] += gr[i];
            }
          }
        }
      });
}

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw InvalidArgument("mean_of: no operands");
  Tensor<T> y = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(xs[0].shape(), xs[i].shape(), "mean_of");
    const auto v = xs[i].value().data();
    for (std::size_t j = 0; j < v.size(); ++j) y[j] += v[j];
  }
  const T m = static_cast<T>(xs.size());
  for (auto& v : y.data()) v /= m;
  std::vector<std::size_t> ids;
  for (const auto& x : xs) ids.push_back(x.id);
  return xs[0].tape->record(std::move(y), xs, "mean_of",
                            [ids, m](Tape<T>& t, const Tensor<T>& g) {
                              for (const auto id : ids) {
                                if (!t.requires_grad(id)) continue;
                                auto& gx = t.grad_buffer(id);
                                for (std::size_t j = 0; j < g.size(); ++j) gx[j] += g[j] / m;
                              }
                            });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t b = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != b) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + logits.shape().str());
  }
  Tensor<T> probs(logits.shape());
  double total = 0.0;
  const T* z = logits.value().ptr();
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                            " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = z + i * k;
    const T zmax = *std::max_element(row, row + k);
    T sum{0};
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - zmax);
      sum += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= sum;
    total += static_cast<double>(std::log(sum) + zmax - row[labels[i]]);
  }
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(b)));
  const std::size_t li = logits.id;
  return logits.tape->record(
      std::move(y), {logits}, "softmax_cross_entropy",
      [li, b, k, labels, probs = std::move(probs)](Tape<T>& t, const Tensor<T>& g) {
        auto& gl = t.grad_buffer(li);
        const T scale = g[0] / static_cast<T>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const T onehot = static_cast<int>(j) == labels[i] ? T{1} : T{0};
            gl[i * k + j] += scale * (probs[i * k + j] - onehot);
          }
      });
}

template <typename T>
Var<T> smooth_l1(Var<T> pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "smooth_l1");
  const std::size_t n = target.size();
  if (n == 0) throw InvalidArgument("smooth_l1: empty input");
  double total = 0.0;
  Tensor<T> slope(target.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(pred.value()[i]) - static_cast<double>(target[i]);
    if (std::abs(x) < 1.0) {
      total += 0.5 * x * x;
      slope[i] = static_cast<T>(x);
    } else {
      total += std::abs(x) - 0.5;
      slope[i] = x > 0 ? T{1} : T{-1};
    }
  }
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
  const std::size_t pi = pred.id;
  return pred.tape->record(std::move(y), {pred}, "smooth_l1",
                           [pi, n, slope = std::move(slope)](Tape<T>& t, const Tensor<T>& g) {
                             auto& gp = t.grad_buffer(pi);
                             const T scale = g[0] / static_cast<T>(n);
                             for (std::size_t i = 0; i < n; ++i) gp[i] += scale * slope[i];
                           });
}

template <typename T>
Var<T> rbf_rows(Var<T> a, Var<T> b, double sigma, KernelForm form, double norm_floor) {
  require_same_shape(a.shape(), b.shape(), "rbf_rows");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("rbf_rows: sigma must be positive, got " + std::to_string(sigma));
  }
  if (a.shape().rank() == 0 || a.shape()[0] == 0) throw ShapeError("rbf_rows: empty batch");
  const std::size_t rows = a.shape()[0], d = a.value().size() / rows;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

  std::vector<double> na(rows), nb(rows), kv(rows);
  Tensor<T> y(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* av = a.value().ptr() + r * d;
    const T* bv = b.value().ptr() + r * d;
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      sa += static_cast<double>(av[i]) * av[i];
      sb += static_cast<double>(bv[i]) * bv[i];
    }
    if (norm_floor > 0.0) {
      sa = std::max(sa, norm_floor * norm_floor);
      sb = std::max(sb, norm_floor * norm_floor);
    } else if (sa == 0.0 || sb == 0.0) {
      throw NumericError("rbf_rows: degenerate normalization, row " + std::to_string(r) +
                         " is all zero");
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = av[i] / na[r] - bv[i] / nb[r];
      dist += diff * diff;
    }
    kv[r] = std::exp(-dist * inv2s2);
    y[r] = static_cast<T>(form == KernelForm::Distance ? 2.0 * (1.0 - kv[r]) : kv[r]);
  }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(y), {a, b}, "rbf_rows",
      [ai, bi, rows, d, inv2s2, form, na = std::move(na), nb = std::move(nb),
       kv = std::move(kv)](Tape<T>& t, const Tensor<T>& g) {
        const bool need_a = t.requires_grad(ai), need_b = t.requires_grad(bi);
        std::vector<double> ga(d), gb(d), ah(d), bh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* av = t.value(ai).ptr() + r * d;
          const T* bv = t.value(bi).ptr() + r * d;
          // d(out)/d(dist)
          const double dk = form == KernelForm::Distance ? 2.0 * kv[r] * inv2s2
                                                         : -kv[r] * inv2s2;
          const double gd = static_cast<double>(g[r]) * dk;
          double dot_a = 0.0, dot_b = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            ah[i] = av[i] / na[r];
            bh[i] = bv[i] / nb[r];
            const double diff = ah[i] - bh[i];
            ga[i] = 2.0 * gd * diff;  // gradient w.r.t. normalized a
            gb[i] = -ga[i];
            dot_a += ah[i] * ga[i];
            dot_b += bh[i] * gb[i];
          }
          if (need_a) {
            T* dst = t.grad_buffer(ai).ptr() + r * d;
            for (std::size_t i = 0; i < d; ++i)
              dst[i] += static_cast<T>((ga[i] - ah[i] * dot_a) / na[r]);
          }
          if (need_b) {
            T* dst = t.grad_buffer(bi).ptr() + r * d;
            for (std::size_t i = 0; i < d; ++i)
              dst[i] += static_cast<T>((gb[i] - bh[i] * dot_b) / nb[r]);
          }
        }
      });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  double acc = 0.0;
  for (const auto v : x.value().data()) acc += static_cast<double>(v);
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, "mean", [xi, n](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad_buffer(xi);
    const T share = g[0] / static_cast<T>(n);
    for (auto& v : gx.data()) v += share;
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& xs, const std::vector<double>& coeffs) {
  if (xs.empty() || xs.size() != coeffs.size()) {
    throw InvalidArgument("weighted_sum: operand/coefficient count mismatch");
  }
  double acc = 0.0;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += coeffs[i] * static_cast<double>(xs[i].value().item());
    ids.push_back(xs[i].id);
  }
  return xs[0].tape->record(Tensor<T>::scalar(static_cast<T>(acc)), xs, "weighted_sum",
                            [ids, coeffs](Tape<T>& t, const Tensor<T>& g) {
                              for (std::size_t i = 0; i < ids.size(); ++i) {
                                if (!t.requires_grad(ids[i])) continue;
                                t.grad_buffer(ids[i])[0] += static_cast<T>(coeffs[i]) * g[0];
                              }
                            });
}

template <typename T>
Var<T> project(Var<T> x, const Tensor<T>& r) {
  require_same_shape(x.shape(), r.shape(), "project");
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += static_cast<double>(x.value()[i]) * r[i];
  const std::size_t xi = x.id;
  return x.tape->record(Tensor<T>::scalar(static_cast<T>(acc)), {x}, "project",
                        [xi, r](Tape<T>& t, const Tensor<T>& g) {
                          auto& gx = t.grad_buffer(xi);
                          for (std::size_t i = 0; i < r.size(); ++i) gx[i] += g[0] * r[i];
                        });
}

#define RFN_INSTANTIATE_OPS(T)                                                              \
  template Var<T> linear<T>(Var<T>, Var<T>);                                                \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                              \
  template Var<T> conv2d<T>(Var<T>, Var<T>, std::size_t, std::size_t);                      \
  template Var<T> activation<T>(Var<T>, Activation);                                        \
  template Var<T> reshape<T>(Var<T>, Shape);                                                \
  template Var<T> gather_planes<T>(Var<T>, MapPtr);                                         \
  template Var<T> rotated_stack<T>(Var<T>, const std::vector<MapPtr>&);                     \
  template Var<T> global_pool<T>(Var<T>, std::size_t, PoolMode);                            \
  template Var<T> scale_stack<T>(Var<T>, Var<T>);                                           \
  template Var<T> resume<T>(Var<T>, std::size_t, ResumeMode);                               \
  template Var<T> mean_of<T>(const std::vector<Var<T>>&);                                   \
  template Var<T> softmax_cross_entropy<T>(Var<T>, const std::vector<int>&);                \
  template Var<T> smooth_l1<T>(Var<T>, const Tensor<T>&);                                   \
  template Var<T> rbf_rows<T>(Var<T>, Var<T>, double, KernelForm, double);                        \
  template Var<T> mean<T>(Var<T>);                                                          \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<double>&); \
  template Var<T> project<T>(Var<T>, const Tensor<T>&);

RFN_INSTANTIATE_OPS(float)
RFN_INSTANTIATE_OPS(double)

}  // namespace rfn::ops
