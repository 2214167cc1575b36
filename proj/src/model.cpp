#include "rfn/model.hpp"

#include <cmath>
#include <sstream>

#include "rfn/ops.hpp"
#include "rfn/optim.hpp"

namespace rfn {

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw InvalidArgument("empty entry in list '" + s + "'");
    item = item.substr(b, e - b + 1);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.front() == '-') {
      throw InvalidArgument("'" + item + "' in list '" + s + "' is not a non-negative integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::size_t ModelSpec::spatial_after(std::size_t stage) const {
  std::size_t s = image_size;
  const std::size_t pad = kernel / 2;
  for (std::size_t i = 0; i < stage && i < channels.size(); ++i) {
    s = (s + 2 * pad - kernel) / strides[i] + 1;
  }
  return s;
}

std::size_t ModelSpec::channels_after(std::size_t stage) const {
  return stage == 0 ? 1 : channels.at(stage - 1);
}

void ModelSpec::validate() const {
  if (channels.empty()) throw InvalidArgument("model: backbone needs at least one stage");
  if (channels.size() != strides.size()) {
    throw InvalidArgument("model: backbone channels and strides lists differ in length");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0 || strides[i] == 0) {
      throw InvalidArgument("model: backbone channels and strides must be positive");
    }
  }
  if (kernel % 2 == 0) throw InvalidArgument("model: kernel size must be odd");
  if (image_size < kernel) throw InvalidArgument("model: image smaller than the kernel");
  if (classes == 0) throw InvalidArgument("model: class count must be positive");
  if (use_rfn) {
    if (rfn.insertion_stage < 1 || static_cast<std::size_t>(rfn.insertion_stage) > stages()) {
      throw InvalidArgument("model: insertion_stage " + std::to_string(rfn.insertion_stage) +
                            " outside [1, " + std::to_string(stages()) + "]");
    }
    rfn.validate(channels_after(static_cast<std::size_t>(rfn.insertion_stage)));
  }
}

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  layout();
}

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) : Model(std::move(spec)) {
  Rng rng(seed);
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const std::string& name = names_[i];
    if (name.ends_with(".bias")) continue;
    double stddev = spec_.init_std;
    if (name.starts_with("backbone.") && spec_.backbone_he_init) {
      const auto& s = values_[i].shape();
      stddev = std::sqrt(2.0 / static_cast<double>(s[0] * s[1] * s[2]));
    }
    values_[i] = truncated_normal<T>(values_[i].shape(), stddev, rng);
  }
}

template <typename T>
void Model<T>::layout() {
  const std::size_t k = spec_.kernel;
  for (std::size_t s = 0; s < spec_.stages(); ++s) {
    const std::string prefix = "backbone." + std::to_string(s);
    names_.push_back(prefix + ".kernel");
    values_.emplace_back(Shape{k, k, spec_.channels_after(s), spec_.channels[s]});
    names_.push_back(prefix + ".bias");
    values_.emplace_back(Shape{spec_.channels[s]});
  }
  if (spec_.use_rfn) {
    const auto c = spec_.channels_after(static_cast<std::size_t>(spec_.rfn.insertion_stage));
    auto p = RfnParams<T>::zeros(spec_.rfn, c);
    names_.push_back("rfn.w1");
    values_.push_back(p.w1);
    if (p.w2) {
      names_.push_back("rfn.w2");
      values_.push_back(*p.w2);
    }
  }
  const std::size_t last = spec_.stages();
  const std::size_t flat =
      spec_.spatial_after(last) * spec_.spatial_after(last) * spec_.channels_after(last);
  names_.push_back("head_cls.weight");
  values_.emplace_back(Shape{flat, spec_.classes});
  names_.push_back("head_cls.bias");
  values_.emplace_back(Shape{spec_.classes});
  names_.push_back("head_reg.weight");
  values_.emplace_back(Shape{flat, 2});
  names_.push_back("head_reg.bias");
  values_.emplace_back(Shape{2});
}

template <typename T>
std::size_t Model<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw InvalidArgument("model has no parameter '" + name + "'");
}

template <typename T>
std::size_t Model<T>::param_total() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

template <typename T>
std::size_t Model<T>::backbone_param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].starts_with("backbone.")) n += values_[i].size();
  return n;
}

template <typename T>
std::size_t Model<T>::head_param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].starts_with("head_")) n += values_[i].size();
  return n;
}

template <typename T>
std::size_t Model<T>::rfn_param_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i].starts_with("rfn.")) n += values_[i].size();
  return n;
}

template <typename T>
std::vector<Var<T>> Model<T>::bind(Tape<T>& tape, bool requires_grad) const {
  std::vector<Var<T>> vars;
  vars.reserve(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    vars.push_back(tape.leaf(values_[i], requires_grad, names_[i]));
  }
  return vars;
}

template <typename T>
Var<T> Model<T>::backbone(Var<T> x, const std::vector<Var<T>>& params, std::size_t from,
                          std::size_t to) const {
  for (std::size_t s = from; s < to; ++s) {
    x = ops::conv2d(x, params[2 * s], spec_.strides[s], spec_.kernel / 2);
    x = ops::relu(ops::add_bias(x, params[2 * s + 1]));
  }
  return x;
}

template <typename T>
RfnGraph<T> Model<T>::block(Var<T> features, const std::vector<Var<T>>& params) const {
  RfnVars<T> vars{params[index_of("rfn.w1")], std::nullopt};
  if (spec_.rfn.r != 0) vars.w2 = params[index_of("rfn.w2")];
  return rfn_apply(features, vars, spec_.rfn);
}

template <typename T>
ModelGraph<T> Model<T>::forward(Var<T> images, const std::vector<Var<T>>& params) const {
  const auto& s = images.shape();
  if (s.rank() != 4 || s[1] != spec_.image_size || s[2] != spec_.image_size || s[3] != 1) {
    throw ShapeError("model: expected images [B," + std::to_string(spec_.image_size) + "," +
                     std::to_string(spec_.image_size) + ",1], got " + s.str());
  }
  ModelGraph<T> g;
  g.params = params;
  const std::size_t last = spec_.stages();
  const std::size_t stage =
      spec_.use_rfn ? static_cast<std::size_t>(spec_.rfn.insertion_stage) : last;
  g.features = backbone(images, params, 0, stage);
  if (spec_.use_rfn) {
    g.block = block(g.features, params);
    g.ri = backbone(g.block->ri, params, stage, last);
    g.rs = backbone(g.block->rs, params, stage, last);
  } else {
    g.ri = g.rs = g.features;
  }
  const std::size_t batch = s[0];
  const std::size_t flat = g.ri.value().size() / batch;
  const std::size_t hc = index_of("head_cls.weight");
  const std::size_t hr = index_of("head_reg.weight");
  g.logits = ops::add_bias(ops::linear(ops::reshape(g.ri, Shape{batch, flat}), params[hc]),
                           params[hc + 1]);
  g.orient = ops::add_bias(ops::linear(ops::reshape(g.rs, Shape{batch, flat}), params[hr]),
                           params[hr + 1]);
  return g;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(spec_);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = values_[i].template cast<U>();
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace rfn
