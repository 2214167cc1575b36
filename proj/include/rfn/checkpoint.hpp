#pragma once

// Checkpoint file (little-endian): "RFN1", version u16, config length u32 +
// UTF-8 config text, tensor count u32, then per tensor: name length u16 + UTF-8
// name, rank u8, rank x u32 dims, f32 values.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rfn/model.hpp"

namespace rfn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const Model<float>& model, std::string config_text);

// Copies tensors into the model. Every name and shape is checked first, so a
// MismatchError leaves the model untouched.
void apply_checkpoint(const Checkpoint& c, Model<float>& model);

}  // namespace rfn
