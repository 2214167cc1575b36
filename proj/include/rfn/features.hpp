#pragma once

// Raw feature heat maps as 8-bit binary PGM files, one per channel.

#include <cstdint>
#include <string>
#include <vector>

#include "rfn/model.hpp"

namespace rfn {

enum class FeatureStage { Input, Stack, Ri, Rs };

FeatureStage parse_feature_stage(const std::string& s);
std::string to_string(FeatureStage s);

// Min-max normalization to [0, 255] with rounding; constant input maps to 0.
std::vector<std::uint8_t> quantize_channel(const std::vector<float>& values);

// "P5\n<w> <h>\n255\n" followed by w*h bytes.
std::vector<std::uint8_t> encode_pgm(const std::vector<std::uint8_t>& pixels, std::size_t width,
                                     std::size_t height);

// image [S,S]. Writes <stage>_c<ch>.pgm, or stack_a<k>_c<ch>.pgm per angle for
// the rotated stack, and returns the written paths in order.
std::vector<std::string> dump_features(const Model<float>& model, const Tensor<float>& image,
                                       FeatureStage stage, const std::string& dir);

}  // namespace rfn
