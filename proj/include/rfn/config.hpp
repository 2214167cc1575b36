#pragma once

// Run configuration: a flat key/value document in a TOML subset (sections,
// dotted keys, strings, integers, floats, booleans, # comments). Every key has
// a default; unknown keys are rejected.

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "rfn/harness.hpp"
#include "rfn/model.hpp"
#include "rfn/synthdata.hpp"

namespace rfn {

class Config {
 public:
  using Value = std::variant<bool, std::int64_t, double, std::string>;

  Config();  // all defaults

  static Config from_text(const std::string& text, const std::string& origin = "<config>");
  static Config from_file(const std::string& path);

  // Applies a document on top of the current values.
  void merge_text(const std::string& text, const std::string& origin);
  // "section.key=value"; strings may be given without quotes.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& literal);

  bool get_bool(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  // Canonical document; parsing it back yields an equal Config. A non-empty
  // `sections` restricts the output to those sections.
  std::string dump(const std::vector<std::string>& sections = {}) const;

  static const std::vector<std::string>& keys();
  friend bool operator==(const Config&, const Config&) = default;

 private:
  const Value& at(const std::string& key) const;
  std::map<std::string, Value> values_;
};

struct DataConfig {
  std::uint64_t train_seed = 1000;
  std::uint64_t test_seed = 2000;
  std::size_t train_size = 2048;
  std::size_t test_size = 1024;
  OrientationPolicy train_orientation = OrientationPolicy::AxisAlignedOnly;
  OrientationPolicy test_orientation = OrientationPolicy::UniformRandom;
  double noise = 0.1;
};

struct AblationGrid {
  std::vector<std::size_t> r;
  std::vector<std::size_t> n;
  std::vector<PoolMode> pooling;
  std::vector<ResumeMode> resume;
  std::vector<int> insertion_stage;
  bool product = false;          // full cartesian product instead of one axis at a time
  bool passthrough_row = true;   // extra row with the block replaced by identity
  std::vector<std::uint64_t> seeds;
};

struct RunConfig {
  ModelSpec model;
  TrainOptions train;
  std::uint64_t seed = 1;  // initialization, shuffling and angle sampling
  DataConfig data;
  AblationGrid ablate;
};

RunConfig to_run_config(const Config& cfg);

// Model-defining keys only; two checkpoints are compatible when these agree.
std::string model_section(const Config& cfg);

}  // namespace rfn
