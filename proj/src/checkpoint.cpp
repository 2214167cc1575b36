#include "rfn/checkpoint.hpp"

#include "rfn/binio.hpp"

namespace rfn {

namespace {
constexpr char kMagic[] = "RFN1";
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  binio::Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.config_text.size()));
  w.raw(c.config_text);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    if (name.size() > 0xFFFF) throw InvalidArgument("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape().dims()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (bytes.size() < 4 || r.raw(4) != std::string_view(kMagic, 4)) {
    throw FormatError("checkpoint: bad magic (not an RFN1 file)");
  }
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.config_text = r.raw(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.raw(r.u16());
    const std::uint8_t rank = r.u8();
    if (rank > 4) {
      throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      d = r.u32();
      numel *= d;
    }
    r.need(numel * 4);
    Tensor<float> t{Shape(std::span<const std::size_t>(dims))};
    for (auto& v : t.data()) v = r.f32();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  binio::write_file(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path));
}

Checkpoint make_checkpoint(const Model<float>& model, std::string config_text) {
  Checkpoint c;
  c.config_text = std::move(config_text);
  for (std::size_t i = 0; i < model.names().size(); ++i) {
    c.tensors.emplace_back(model.names()[i], model.values()[i]);
  }
  return c;
}

void apply_checkpoint(const Checkpoint& c, Model<float>& model) {
  const auto& names = model.names();
  if (c.tensors.size() != names.size()) {
    throw MismatchError("architecture mismatch: checkpoint has " +
                        std::to_string(c.tensors.size()) + " tensors, model expects " +
                        std::to_string(names.size()));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& [name, t] = c.tensors[i];
    if (name != names[i]) {
      throw MismatchError("architecture mismatch: tensor " + std::to_string(i) + " is '" + name +
                          "', model expects '" + names[i] + "'");
    }
    if (!(t.shape() == model.values()[i].shape())) {
      throw MismatchError("architecture mismatch: '" + name + "' has shape " + t.shape().str() +
                          ", model expects " + model.values()[i].shape().str());
    }
  }
  for (std::size_t i = 0; i < names.size(); ++i) model.values()[i] = c.tensors[i].second;
}

}  // namespace rfn
