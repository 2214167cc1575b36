#include "rfn/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rfn/binio.hpp"
#include "rfn/rng.hpp"
#include "rfn/rotation.hpp"

namespace rfn {

OrientationPolicy parse_orientation_policy(const std::string& s) {
  if (s == "uniform_random") return OrientationPolicy::UniformRandom;
  if (s == "axis_aligned_only") return OrientationPolicy::AxisAlignedOnly;
  throw InvalidArgument("unknown orientation policy '" + s +
                        "' (expected uniform_random|axis_aligned_only)");
}

std::string to_string(OrientationPolicy p) {
  return p == OrientationPolicy::UniformRandom ? "uniform_random" : "axis_aligned_only";
}

std::string shape_name(int class_id) {
  static const char* names[] = {"bar", "L", "T", "wedge"};
  if (class_id < 0 || class_id >= static_cast<int>(kShapeFamilies)) {
    throw InvalidArgument("invalid shape class " + std::to_string(class_id));
  }
  return names[class_id];
}

namespace {

// Membership in normalized coordinates: x right, y down, both in (-1, 1).
bool inside(int class_id, double x, double y) {
  switch (class_id) {
    case 0:  // bar
      return std::abs(y) <= 0.13 && std::abs(x) <= 0.65;
    case 1:  // L
      return (x >= -0.5 && x <= -0.25 && y >= -0.6 && y <= 0.6) ||
             (y >= 0.35 && y <= 0.6 && x >= -0.5 && x <= 0.5);
    case 2:  // T
      return (y >= -0.6 && y <= -0.35 && x >= -0.6 && x <= 0.6) ||
             (x >= -0.125 && x <= 0.125 && y >= -0.35 && y <= 0.6);
    case 3:  // wedge, apex up
      return y >= -0.6 && y <= 0.6 && std::abs(x) <= 0.5 * (y + 0.6) / 1.2;
    default:
      return false;
  }
}

double wrap_angle(double theta) {
  double t = std::fmod(theta, 2.0 * std::numbers::pi);
  if (t < 0) t += 2.0 * std::numbers::pi;
  return t;
}

}  // namespace

Tensor<float> canonical_template(int class_id, std::size_t size) {
  shape_name(class_id);
  if (size < 4) throw InvalidArgument("canonical_template: image size must be at least 4");
  Tensor<float> img(Shape{size, size});
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / (s / 2.0) - 1.0;
      const double y = (static_cast<double>(i) + 0.5) / (s / 2.0) - 1.0;
      img[i * size + j] = inside(class_id, x, y) ? 1.0f : 0.0f;
    }
  return img;
}

ShapeSample gen_sample(std::uint64_t seed, int class_id, double orientation, double noise_level,
                       std::size_t size) {
  if (!std::isfinite(orientation)) throw InvalidArgument("gen_sample: non-finite orientation");
  if (noise_level < 0.0) throw InvalidArgument("gen_sample: negative noise level");
  ShapeSample s;
  s.class_id = class_id;
  s.noise_seed = seed;
  const double theta = wrap_angle(orientation);
  s.orientation = static_cast<float>(theta);
  if (s.orientation >= static_cast<float>(2.0 * std::numbers::pi)) s.orientation = 0.0f;
  s.image = rotate_map(canonical_template(class_id, size), theta);
  if (noise_level > 0.0) {
    Rng rng(seed);
    for (auto& v : s.image.data()) v += static_cast<float>(noise_level * rng.uniform(-1.0, 1.0));
  }
  for (auto& v : s.image.data()) v = std::clamp(v, 0.0f, 1.0f);
  return s;
}

Dataset gen_dataset(std::uint64_t seed, std::size_t size, std::size_t classes,
                    OrientationPolicy policy, double noise_level, std::size_t image_size,
                    std::string split) {
  if (classes == 0 || classes > kShapeFamilies) {
    throw InvalidArgument("gen_dataset: class count must be in [1, " +
                          std::to_string(kShapeFamilies) + "]");
  }
  if (size < classes) {
    throw InvalidArgument("gen_dataset: size " + std::to_string(size) +
                          " is smaller than the class count " + std::to_string(classes));
  }
  Dataset d;
  d.image_size = image_size;
  d.classes = classes;
  d.split = std::move(split);
  d.seed = seed;
  d.samples.reserve(size);
  Rng rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    const int cls = static_cast<int>(i % classes);
    const double theta = policy == OrientationPolicy::UniformRandom
                             ? 2.0 * std::numbers::pi * rng.uniform()
                             : static_cast<double>(rng.below(4)) * (std::numbers::pi / 2.0);
    const std::uint64_t noise_seed = rng.next();
    d.samples.push_back(gen_sample(noise_seed, cls, theta, noise_level, image_size));
  }
  return d;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  binio::Writer w;
  w.raw("RFND");
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(d.samples.size()));
  w.u16(static_cast<std::uint16_t>(d.image_size));
  w.u16(static_cast<std::uint16_t>(d.classes));
  for (const auto& s : d.samples) {
    if (s.image.size() != d.image_size * d.image_size) {
      throw ShapeError("encode_dataset: sample image " + s.image.shape().str() +
                       " does not match image size " + std::to_string(d.image_size));
    }
    w.u16(static_cast<std::uint16_t>(s.class_id));
    w.f32(s.orientation);
    w.u64(s.noise_seed);
    for (const float v : s.image.data()) w.f32(v);
  }
  return w.bytes();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "dataset");
  if (bytes.size() < 4 || r.raw(4) != "RFND") throw FormatError("dataset: bad magic (expected RFND)");
  const auto version = r.u16();
  if (version != kDatasetVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  Dataset d;
  d.image_size = r.u16();
  d.classes = r.u16();
  d.split.clear();
  const std::size_t pixels = d.image_size * d.image_size;
  r.need(static_cast<std::size_t>(count) * (2 + 4 + 8 + 4 * pixels));
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ShapeSample s;
    s.class_id = r.u16();
    if (static_cast<std::size_t>(s.class_id) >= d.classes) {
      throw FormatError("dataset: sample " + std::to_string(i) + " has class " +
                        std::to_string(s.class_id) + " outside [0, " + std::to_string(d.classes) + ")");
    }
    s.orientation = r.f32();
    s.noise_seed = r.u64();
    std::vector<float> px(pixels);
    for (auto& v : px) v = r.f32();
    s.image = Tensor<float>(Shape{d.image_size, d.image_size}, std::move(px));
    d.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw FormatError("dataset: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  binio::write_file(path, encode_dataset(d));
}

Dataset load_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

}  // namespace rfn
