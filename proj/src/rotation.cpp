#include "rfn/rotation.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>

#include "rfn/ops.hpp"

namespace rfn {

AngleSet angle_set(std::size_t n) {
  if (n == 0) throw InvalidArgument("angle_set: n must be at least 1");
  AngleSet s;
  s.n = n;
  for (std::size_t k = 0; k < n; ++k) {
    s.angles.push_back(static_cast<double>(k) * (2.0 * std::numbers::pi) /
                       static_cast<double>(n));
  }
  return s;
}

std::optional<int> quarter_turns(double theta) {
  if (!std::isfinite(theta)) return std::nullopt;
  const double q = theta / (std::numbers::pi / 2.0);
  const double r = std::round(q);
  // Loose enough that an angle stored as float32 still snaps.
  if (std::abs(q - r) > 1e-6) return std::nullopt;
  const auto k = static_cast<long long>(r) % 4;
  return static_cast<int>(k < 0 ? k + 4 : k);
}

namespace {

kernels::GatherMap make_map(std::size_t size, double theta) {
  kernels::GatherMap m;
  const std::size_t pixels = size * size;
  m.pixels = pixels;
  m.src.assign(pixels, {0, 0, 0, 0});
  m.weight.assign(pixels, {0.0, 0.0, 0.0, 0.0});
  m.taps.assign(pixels, 0);

  if (const auto k = quarter_turns(theta)) {
    m.exact = true;
    const std::size_t last = size - 1;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j) {
        std::size_t si = i, sj = j;
        switch (*k) {
          case 1: si = j; sj = last - i; break;
          case 2: si = last - i; sj = last - j; break;
          case 3: si = last - j; sj = i; break;
          default: break;
        }
        const std::size_t p = i * size + j;
        m.src[p][0] = static_cast<std::uint32_t>(si * size + sj);
        m.weight[p][0] = 1.0;
        m.taps[p] = 1;
      }
    return m;
  }

  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double s = std::sin(theta), co = std::cos(theta);
  const auto extent = static_cast<long long>(size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double x = static_cast<double>(j) - c;
      const double y = c - static_cast<double>(i);
      const double is = c + s * x - co * y;
      const double js = c + co * x + s * y;
      const double i0 = std::floor(is), j0 = std::floor(js);
      const double fi = is - i0, fj = js - j0;
      const long long ii = static_cast<long long>(i0), jj = static_cast<long long>(j0);
      const std::size_t p = i * size + j;
      std::uint8_t t = 0;
      const auto add = [&](long long r, long long q, double w) {
        if (w == 0.0 || r < 0 || q < 0 || r >= extent || q >= extent) return;
        m.src[p][t] = static_cast<std::uint32_t>(r * extent + q);
        m.weight[p][t] = w;
        ++t;
      };
      add(ii, jj, (1.0 - fi) * (1.0 - fj));
      add(ii, jj + 1, (1.0 - fi) * fj);
      add(ii + 1, jj, fi * (1.0 - fj));
      add(ii + 1, jj + 1, fi * fj);
      m.taps[p] = t;
    }
  return m;
}

}  // namespace

std::shared_ptr<const kernels::GatherMap> rotation_map(std::size_t size, double theta) {
  if (size == 0) throw InvalidArgument("rotation_map: empty plane");
  if (!std::isfinite(theta)) throw InvalidArgument("rotation_map: non-finite angle");
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::uint64_t>,
                  std::shared_ptr<const kernels::GatherMap>>
      cache;
  std::uint64_t bits;
  std::memcpy(&bits, &theta, sizeof bits);
  const auto key = std::make_pair(size, bits);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto map = std::make_shared<const kernels::GatherMap>(make_map(size, theta));
  std::lock_guard lock(mu);
  if (cache.size() > 4096) cache.clear();
  return cache.emplace(key, map).first->second;
}

std::vector<std::shared_ptr<const kernels::GatherMap>> rotation_maps(std::size_t size,
                                                                     const AngleSet& set) {
  std::vector<std::shared_ptr<const kernels::GatherMap>> maps;
  for (const double a : set.angles) maps.push_back(rotation_map(size, a));
  return maps;
}

template <typename T>
Tensor<T> rotate_map(const Tensor<T>& plane, double theta) {
  if (plane.rank() != 2) throw ShapeError("rotate_map: expected H x W, got " + plane.shape().str());
  if (plane.dim(0) != plane.dim(1)) {
    throw InvalidArgument("rotate_map: plane must be square, got " + plane.shape().str());
  }
  const auto map = rotation_map(plane.dim(0), theta);
  Tensor<T> out(plane.shape());
  kernels::gather_forward<T>(plane.data(), out.data(), 1, 1, *map);
  return out;
}

template <typename T>
RotatedStack<T> build_rotated_stack(const Tensor<T>& x, const AngleSet& set) {
  if (x.rank() != 3) throw ShapeError("build_rotated_stack: expected H x W x C, got " + x.shape().str());
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h != w) throw InvalidArgument("build_rotated_stack: spatial extent must be square, got " + x.shape().str());
  RotatedStack<T> out;
  out.concatenated = Tensor<T>(Shape{h, w, set.n * c});
  for (std::size_t k = 0; k < set.n; ++k) {
    Tensor<T> slab(x.shape());
    kernels::gather_forward<T>(x.data(), slab.data(), 1, c, *rotation_map(h, set.angles[k]));
    for (std::size_t p = 0; p < h * w; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        out.concatenated[p * set.n * c + k * c + ch] = slab[p * c + ch];
    out.per_angle.push_back(std::move(slab));
  }
  return out;
}

template <typename T>
Var<T> rotate_features(Var<T> x, double theta) {
  if (x.shape().rank() != 4 || x.shape()[1] != x.shape()[2]) {
    throw InvalidArgument("rotate_features: expected square [B,H,W,C], got " + x.shape().str());
  }
  return ops::gather_planes(x, rotation_map(x.shape()[1], theta));
}

template <typename T>
Var<T> rotate_stack(Var<T> x, const AngleSet& set) {
  if (x.shape().rank() != 4 || x.shape()[1] != x.shape()[2]) {
    throw InvalidArgument("rotate_stack: expected square [B,H,W,C], got " + x.shape().str());
  }
  return ops::rotated_stack(x, rotation_maps(x.shape()[1], set));
}

template Tensor<float> rotate_map<float>(const Tensor<float>&, double);
template Tensor<double> rotate_map<double>(const Tensor<double>&, double);
template RotatedStack<float> build_rotated_stack<float>(const Tensor<float>&, const AngleSet&);
template RotatedStack<double> build_rotated_stack<double>(const Tensor<double>&, const AngleSet&);
template Var<float> rotate_features<float>(Var<float>, double);
template Var<double> rotate_features<double>(Var<double>, double);
template Var<float> rotate_stack<float>(Var<float>, const AngleSet&);
template Var<double> rotate_stack<double>(Var<double>, const AngleSet&);

}  // namespace rfn
