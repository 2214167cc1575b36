#pragma once

// Toy detector-style model: conv backbone, optional rotated feature block at a
// chosen stage, RI -> class logits, RS -> (sin, cos) orientation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfn/autodiff.hpp"
#include "rfn/rfn_block.hpp"

namespace rfn {

struct ModelSpec {
  std::vector<std::size_t> channels{8, 16};  // per backbone stage
  std::vector<std::size_t> strides{2, 2};
  std::size_t kernel = 3;
  std::size_t image_size = 32;
  std::size_t classes = 4;
  bool use_rfn = true;  // false: identity pass-through feeding both heads
  RfnConfig rfn;
  double init_std = 0.01;         // gate and heads
  bool backbone_he_init = true;   // backbone std sqrt(2 / fan_in) instead of init_std

  std::size_t stages() const { return channels.size(); }
  std::size_t spatial_after(std::size_t stage) const;   // stage in [0, stages]
  std::size_t channels_after(std::size_t stage) const;  // stage 0 is the image
  void validate() const;
};

template <typename T>
struct ModelGraph {
  std::vector<Var<T>> params;  // leaves, in Model::names() order
  Var<T> features;             // block input [B,h,w,C]
  std::optional<RfnGraph<T>> block;
  Var<T> ri;      // block output feeding the classifier branch
  Var<T> rs;      // block output feeding the regressor branch
  Var<T> logits;  // [B,K]
  Var<T> orient;  // [B,2]
};

template <typename T>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);
  // Zero-initialized parameters with the given spec (for loading).
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& values() { return values_; }
  const std::vector<Tensor<T>>& values() const { return values_; }
  std::size_t param_total() const;
  std::size_t backbone_param_count() const;
  std::size_t head_param_count() const;
  std::size_t rfn_param_count() const;

  std::vector<Var<T>> bind(Tape<T>& tape, bool requires_grad) const;

  // images [B,S,S,1].
  ModelGraph<T> forward(Var<T> images, const std::vector<Var<T>>& params) const;

  // Backbone stages [from, to) applied to x.
  Var<T> backbone(Var<T> x, const std::vector<Var<T>>& params, std::size_t from,
                  std::size_t to) const;
  RfnGraph<T> block(Var<T> features, const std::vector<Var<T>>& params) const;

  template <typename U>
  Model<U> cast() const;

 private:
  void layout();
  std::size_t index_of(const std::string& name) const;

  ModelSpec spec_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
};

std::vector<std::size_t> parse_size_list(const std::string& s);
std::string format_size_list(const std::vector<std::size_t>& v);

}  // namespace rfn
