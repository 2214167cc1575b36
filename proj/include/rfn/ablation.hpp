#pragma once

// Ablation grid over the block's axes (reduction ratio, angle count, pooling,
// resuming, insertion stage), trained and evaluated per configuration.

#include <cstdint>
#include <string>
#include <vector>

#include "rfn/config.hpp"

namespace rfn {

struct AblationCase {
  std::string axis;  // "baseline", "passthrough", or the varied axis name
  ModelSpec model;
  std::uint64_t seed = 0;
  bool is_baseline = false;
};

struct AblationRow {
  AblationCase config;
  MetricsReport metrics;
};

// Baseline first, then either one-axis-at-a-time variants of the base or the
// full product; each configuration repeated for every seed. Invalid values
// raise InvalidArgument naming the axis.
std::vector<AblationCase> expand_grid(const RunConfig& base);

// Rows come back in grid order whatever the completion order. `threads` caps
// concurrent runs; each run is single-threaded.
std::vector<AblationRow> run_ablation(const std::vector<AblationCase>& cases,
                                      const TrainOptions& opts, const Dataset& train_set,
                                      const Dataset& test_set, std::size_t threads);

std::string ablation_csv_header();
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rfn
