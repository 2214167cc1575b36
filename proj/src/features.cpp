#include "rfn/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "rfn/binio.hpp"

namespace rfn {

FeatureStage parse_feature_stage(const std::string& s) {
  if (s == "input") return FeatureStage::Input;
  if (s == "stack") return FeatureStage::Stack;
  if (s == "ri") return FeatureStage::Ri;
  if (s == "rs") return FeatureStage::Rs;
  throw InvalidArgument("unknown feature stage '" + s + "' (expected input|stack|ri|rs)");
}

std::string to_string(FeatureStage s) {
  switch (s) {
    case FeatureStage::Input: return "input";
    case FeatureStage::Stack: return "stack";
    case FeatureStage::Ri: return "ri";
    case FeatureStage::Rs: return "rs";
  }
  return "?";
}

std::vector<std::uint8_t> quantize_channel(const std::vector<float>& values) {
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo, range = static_cast<double>(*hi) - min;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double q = std::lround((static_cast<double>(values[i]) - min) / range * 255.0);
    out[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return out;
}

std::vector<std::uint8_t> encode_pgm(const std::vector<std::uint8_t>& pixels, std::size_t width,
                                     std::size_t height) {
  if (pixels.size() != width * height) {
    throw ShapeError("pgm: " + std::to_string(pixels.size()) + " pixels for " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

std::vector<std::string> dump_features(const Model<float>& model, const Tensor<float>& image,
                                       FeatureStage stage, const std::string& dir) {
  const ModelSpec& spec = model.spec();
  const std::size_t s = spec.image_size;
  if (image.size() != s * s) {
    throw ShapeError("dump_features: image " + image.shape().str() + " does not match size " +
                     std::to_string(s));
  }
  if (stage != FeatureStage::Input && !spec.use_rfn) {
    throw InvalidArgument("dump_features: stage '" + to_string(stage) +
                          "' needs a model with the rotated feature block");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("dump_features: cannot create directory '" + dir + "'");
  }

  Tape<float> tape;
  const auto params = model.bind(tape, false);
  const auto g = model.forward(tape.constant(image.reshaped(Shape{1, s, s, 1})), params);
  const Tensor<float>* maps = &g.features.value();
  if (stage == FeatureStage::Stack) maps = &g.block->stack.value();
  if (stage == FeatureStage::Ri) maps = &g.block->ri.value();
  if (stage == FeatureStage::Rs) maps = &g.block->rs.value();

  const std::size_t slabs = maps->shape()[0];
  const std::size_t h = maps->shape()[1], w = maps->shape()[2], c = maps->shape()[3];
  std::vector<std::string> paths;
  for (std::size_t k = 0; k < slabs; ++k) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::vector<float> plane(h * w);
      for (std::size_t p = 0; p < h * w; ++p) plane[p] = (*maps)[(k * h * w + p) * c + ch];
      std::string name = stage == FeatureStage::Stack
                             ? "stack_a" + std::to_string(k) + "_c" + std::to_string(ch)
                             : to_string(stage) + "_c" + std::to_string(ch);
      const std::string path = (std::filesystem::path(dir) / (name + ".pgm")).string();
      binio::write_file(path, encode_pgm(quantize_channel(plane), w, h));
      paths.push_back(path);
    }
  }
  return paths;
}

}  // namespace rfn
