#include "rfn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "rfn/binio.hpp"

namespace rfn {

namespace {

enum class Kind { Bool, Int, Float, String };

struct KeySpec {
  const char* key;
  Kind kind;
  Config::Value fallback;
  const char* doc;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = {
      {"model.channels", Kind::String, std::string("8,16"), "output channels per backbone stage"},
      {"model.strides", Kind::String, std::string("2,2"), "stride per backbone stage"},
      {"model.kernel", Kind::Int, std::int64_t{3}, "square conv kernel extent (odd)"},
      {"model.image_size", Kind::Int, std::int64_t{32}, "input side length"},
      {"model.classes", Kind::Int, std::int64_t{4}, "shape families"},
      {"model.use_rfn", Kind::Bool, true, "false: identity pass-through into both heads"},
      {"model.init_std", Kind::Float, 0.01, "truncated-normal std for gate and heads"},
      {"model.he_init", Kind::Bool, true, "backbone std sqrt(2 / fan_in)"},
      {"rfn.n", Kind::Int, std::int64_t{4}, "rotation angles"},
      {"rfn.r", Kind::Int, std::int64_t{8}, "reduction ratio, 0 for a single gate layer"},
      {"rfn.pooling", Kind::String, std::string("max"), "max | avg"},
      {"rfn.resume", Kind::String, std::string("sum"), "sum | max"},
      {"rfn.insertion_stage", Kind::Int, std::int64_t{2}, "backbone stage the block follows"},
      {"rfn.uniform_weights", Kind::Bool, false, "fix every angle weight at 0.5"},
      {"loss.sigma", Kind::Float, 1.0, "RBF bandwidth"},
      {"loss.median_sigma", Kind::Bool, false, "per-batch median bandwidth"},
      {"loss.lambda_reg", Kind::Float, 0.2, "orientation loss weight"},
      {"loss.lambda_ri", Kind::Float, 0.5, "invariance loss weight"},
      {"loss.form", Kind::String, std::string("distance"), "distance | similarity"},
      {"train.seed", Kind::Int, std::int64_t{1}, "initialization and shuffling"},
      {"train.epochs", Kind::Int, std::int64_t{20}, ""},
      {"train.batch_size", Kind::Int, std::int64_t{32}, ""},
      {"train.learning_rate", Kind::Float, 0.01, ""},
      {"train.momentum", Kind::Float, 0.9, ""},
      {"train.weight_decay", Kind::Float, 0.0005, ""},
      {"train.lr_decay", Kind::Float, 0.95, "multiplier applied every lr_decay_every epochs"},
      {"train.lr_decay_every", Kind::Int, std::int64_t{10}, ""},
      {"train.ri_source", Kind::String, std::string("features"), "features | image"},
      {"train.ri_angles", Kind::String, std::string("all"), "all | sampled"},
      {"data.train_seed", Kind::Int, std::int64_t{1000}, ""},
      {"data.test_seed", Kind::Int, std::int64_t{2000}, ""},
      {"data.train_size", Kind::Int, std::int64_t{2048}, ""},
      {"data.test_size", Kind::Int, std::int64_t{1024}, ""},
      {"data.train_orientation", Kind::String, std::string("axis_aligned_only"),
       "uniform_random | axis_aligned_only"},
      {"data.test_orientation", Kind::String, std::string("uniform_random"), ""},
      {"data.noise", Kind::Float, 0.1, "uniform noise amplitude"},
      {"ablate.r", Kind::String, std::string("0,4,8,16,32"), ""},
      {"ablate.n", Kind::String, std::string("2,4,6,8"), ""},
      {"ablate.pooling", Kind::String, std::string("max,avg"), ""},
      {"ablate.resume", Kind::String, std::string("sum,max"), ""},
      {"ablate.insertion_stage", Kind::String, std::string("1,2"), ""},
      {"ablate.product", Kind::Bool, false, "full product instead of one axis at a time"},
      {"ablate.passthrough_row", Kind::Bool, true, "add an identity pass-through row"},
      {"ablate.seeds", Kind::String, std::string("1"), "training seeds, one row set each"},
  };
  return s;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : schema())
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

// Strips a trailing comment outside of quotes.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_str) {
      ++i;
    } else if (line[i] == '"') {
      in_str = !in_str;
    } else if (line[i] == '#' && !in_str) {
      return line.substr(0, i);
    }
  }
  return line;
}

Config::Value parse_literal(const KeySpec& spec, const std::string& text, bool bare_strings,
                            const std::string& where) {
  const std::string t = trim(text);
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(where + ": " + spec.key + " = " + t + ": " + why);
  };
  switch (spec.kind) {
    case Kind::Bool:
      if (t == "true") return true;
      if (t == "false") return false;
      throw fail("expected true or false");
    case Kind::Int: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || p != t.data() + t.size() || t.empty()) throw fail("expected an integer");
      return v;
    }
    case Kind::Float: {
      double v = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || p != t.data() + t.size() || t.empty()) throw fail("expected a number");
      if (!std::isfinite(v)) throw fail("expected a finite number");
      return v;
    }
    case Kind::String: {
      if (t.size() >= 2 && t.front() == '"' && t.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < t.size(); ++i) {
          if (t[i] == '\\' && i + 2 < t.size()) ++i;
          out += t[i];
        }
        return out;
      }
      if (bare_strings) return t;
      throw fail("expected a quoted string");
    }
  }
  throw fail("unsupported type");
}

template <typename E>
std::vector<E> parse_list(const std::string& key, const std::string& s, E (*one)(std::string_view)) {
  std::vector<E> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(one(trim(item)));
    } catch (const std::invalid_argument& e) {
      throw InvalidArgument(key + ": " + e.what());
    }
  }
  if (out.empty()) throw InvalidArgument(key + ": empty list");
  return out;
}

std::size_t as_size(const Config& c, const std::string& key) {
  const auto v = c.get_int(key);
  if (v < 0) throw InvalidArgument(key + " must be non-negative, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

}  // namespace

Config::Config() {
  for (const auto& k : schema()) values_[k.key] = k.fallback;
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  Config c;
  c.merge_text(text, origin);
  return c;
}

Config Config::from_file(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return from_text(std::string(bytes.begin(), bytes.end()), path);
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(ss, line); ++lineno) {
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw FormatError(where + ": malformed section header '" + t + "'");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string name = trim(t.substr(0, eq));
    const std::string key = section.empty() ? name : section + "." + name;
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) throw FormatError(where + ": unknown key '" + key + "'");
    values_[key] = parse_literal(*spec, t.substr(eq + 1), false, where);
  }
}

void Config::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void Config::set(const std::string& key, const std::string& literal) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw InvalidArgument("unknown key '" + key + "'");
  values_[key] = parse_literal(*spec, literal, true, "override");
}

const Config::Value& Config::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("unknown key '" + key + "'");
  return it->second;
}

bool Config::get_bool(const std::string& key) const { return std::get<bool>(at(key)); }
std::int64_t Config::get_int(const std::string& key) const { return std::get<std::int64_t>(at(key)); }
double Config::get_double(const std::string& key) const { return std::get<double>(at(key)); }
const std::string& Config::get_string(const std::string& key) const {
  return std::get<std::string>(at(key));
}

std::uint64_t Config::get_uint(const std::string& key) const {
  const auto v = get_int(key);
  if (v < 0) throw InvalidArgument(key + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::string Config::dump(const std::vector<std::string>& sections) const {
  std::string out;
  std::string section;
  for (const auto& k : schema()) {
    const std::string key = k.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (!sections.empty() && std::find(sections.begin(), sections.end(), sec) == sections.end()) {
      continue;
    }
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    const Value& v = values_.at(key);
    std::string lit;
    if (auto b = std::get_if<bool>(&v)) lit = *b ? "true" : "false";
    else if (auto i = std::get_if<std::int64_t>(&v)) lit = std::to_string(*i);
    else if (auto d = std::get_if<double>(&v)) lit = format_double(*d);
    else lit = quote(std::get<std::string>(v));
    out += key.substr(dot + 1) + " = " + lit;
    if (*k.doc) out += std::string("  # ") + k.doc;
    out += "\n";
  }
  return out;
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> v;
    for (const auto& k : schema()) v.emplace_back(k.key);
    return v;
  }();
  return ks;
}

std::string model_section(const Config& cfg) { return cfg.dump({"model", "rfn"}); }

RunConfig to_run_config(const Config& c) {
  RunConfig rc;
  ModelSpec& m = rc.model;
  m.channels = parse_size_list(c.get_string("model.channels"));
  m.strides = parse_size_list(c.get_string("model.strides"));
  m.kernel = as_size(c, "model.kernel");
  m.image_size = as_size(c, "model.image_size");
  m.classes = as_size(c, "model.classes");
  m.use_rfn = c.get_bool("model.use_rfn");
  m.init_std = c.get_double("model.init_std");
  m.backbone_he_init = c.get_bool("model.he_init");
  m.rfn.n = as_size(c, "rfn.n");
  m.rfn.r = as_size(c, "rfn.r");
  m.rfn.pooling = parse_pool_mode(c.get_string("rfn.pooling"));
  m.rfn.resume = parse_resume_mode(c.get_string("rfn.resume"));
  m.rfn.insertion_stage = static_cast<int>(c.get_int("rfn.insertion_stage"));
  m.rfn.uniform_weights = c.get_bool("rfn.uniform_weights");
  m.validate();

  TrainOptions& t = rc.train;
  t.loss.sigma = c.get_double("loss.sigma");
  t.loss.median_sigma = c.get_bool("loss.median_sigma");
  t.loss.lambda_reg = c.get_double("loss.lambda_reg");
  t.loss.lambda_ri = c.get_double("loss.lambda_ri");
  t.loss.form = parse_kernel_form(c.get_string("loss.form"));
  t.loss.validate();
  rc.seed = c.get_uint("train.seed");
  t.epochs = as_size(c, "train.epochs");
  t.batch_size = as_size(c, "train.batch_size");
  if (t.batch_size == 0) throw InvalidArgument("train.batch_size must be positive");
  t.learning_rate = c.get_double("train.learning_rate");
  t.momentum = c.get_double("train.momentum");
  t.weight_decay = c.get_double("train.weight_decay");
  t.lr_decay = c.get_double("train.lr_decay");
  t.lr_decay_every = as_size(c, "train.lr_decay_every");
  const std::string& src = c.get_string("train.ri_source");
  if (src == "features") t.ri_source = RiSource::Features;
  else if (src == "image") t.ri_source = RiSource::Image;
  else throw InvalidArgument("train.ri_source must be features or image, got '" + src + "'");
  const std::string& ang = c.get_string("train.ri_angles");
  if (ang == "all") t.ri_angles = RiAngles::All;
  else if (ang == "sampled") t.ri_angles = RiAngles::Sampled;
  else throw InvalidArgument("train.ri_angles must be all or sampled, got '" + ang + "'");

  DataConfig& d = rc.data;
  d.train_seed = c.get_uint("data.train_seed");
  d.test_seed = c.get_uint("data.test_seed");
  d.train_size = as_size(c, "data.train_size");
  d.test_size = as_size(c, "data.test_size");
  d.train_orientation = parse_orientation_policy(c.get_string("data.train_orientation"));
  d.test_orientation = parse_orientation_policy(c.get_string("data.test_orientation"));
  d.noise = c.get_double("data.noise");
  if (d.noise < 0.0) throw InvalidArgument("data.noise must be non-negative");

  AblationGrid& g = rc.ablate;
  for (auto v : parse_size_list(c.get_string("ablate.r"))) g.r.push_back(v);
  for (auto v : parse_size_list(c.get_string("ablate.n"))) g.n.push_back(v);
  g.pooling = parse_list<PoolMode>("ablate.pooling", c.get_string("ablate.pooling"), parse_pool_mode);
  g.resume =
      parse_list<ResumeMode>("ablate.resume", c.get_string("ablate.resume"), parse_resume_mode);
  for (auto v : parse_size_list(c.get_string("ablate.insertion_stage")))
    g.insertion_stage.push_back(static_cast<int>(v));
  g.product = c.get_bool("ablate.product");
  g.passthrough_row = c.get_bool("ablate.passthrough_row");
  for (auto v : parse_size_list(c.get_string("ablate.seeds"))) g.seeds.push_back(v);
  return rc;
}

}  // namespace rfn
