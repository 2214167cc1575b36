#pragma once

// Oriented-shape images: four binary templates (bar, L, T, wedge) rotated to a
// target orientation, with seeded uniform noise.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rfn/tensor.hpp"

namespace rfn {

inline constexpr std::size_t kShapeFamilies = 4;
inline constexpr std::uint16_t kDatasetVersion = 1;

enum class OrientationPolicy { UniformRandom, AxisAlignedOnly };

OrientationPolicy parse_orientation_policy(const std::string& s);
std::string to_string(OrientationPolicy p);
std::string shape_name(int class_id);

struct ShapeSample {
  Tensor<float> image;  // S x S in [0, 1]
  int class_id = 0;
  float orientation = 0.0f;  // radians in [0, 2pi)
  std::uint64_t noise_seed = 0;

  friend bool operator==(const ShapeSample&, const ShapeSample&) = default;
};

struct Dataset {
  std::vector<ShapeSample> samples;
  std::size_t image_size = 32;
  std::size_t classes = kShapeFamilies;
  std::string split = "train";
  std::uint64_t seed = 0;

  // File-level equality: the split tag and seed are not part of the file.
  bool same_content(const Dataset& other) const {
    return image_size == other.image_size && classes == other.classes &&
           samples == other.samples;
  }
};

// Binary template of a shape family at orientation 0.
Tensor<float> canonical_template(int class_id, std::size_t size = 32);

ShapeSample gen_sample(std::uint64_t seed, int class_id, double orientation, double noise_level,
                       std::size_t size = 32);

// Class of sample i is i mod K; orientations and noise seeds come from one
// stream seeded with `seed`.
Dataset gen_dataset(std::uint64_t seed, std::size_t size, std::size_t classes,
                    OrientationPolicy policy, double noise_level, std::size_t image_size = 32,
                    std::string split = "train");

// Layout (little-endian): "RFND", version u16, count u32, S u16, K u16, then per
// sample: class u16, orientation f32, seed u64, S*S f32 pixels.
std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace rfn
