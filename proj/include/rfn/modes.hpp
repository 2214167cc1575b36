#pragma once

#include <string>
#include <string_view>

#include "rfn/errors.hpp"

namespace rfn {

enum class Activation { Relu, Sigmoid };
enum class PoolMode { Max, Avg };
enum class ResumeMode { Sum, Max };
// Distance: 2 * (1 - k(a, b)), minimized at equality. Similarity: k(a, b) itself.
enum class KernelForm { Distance, Similarity };

inline std::string to_string(PoolMode m) { return m == PoolMode::Max ? "max" : "avg"; }
inline std::string to_string(ResumeMode m) { return m == ResumeMode::Sum ? "sum" : "max"; }
inline std::string to_string(KernelForm m) {
  return m == KernelForm::Distance ? "distance" : "similarity";
}

inline PoolMode parse_pool_mode(std::string_view s) {
  if (s == "max" || s == "global_max") return PoolMode::Max;
  if (s == "avg" || s == "global_avg") return PoolMode::Avg;
  throw InvalidArgument("unknown pooling mode '" + std::string(s) + "' (expected max|avg)");
}

inline ResumeMode parse_resume_mode(std::string_view s) {
  if (s == "sum") return ResumeMode::Sum;
  if (s == "max") return ResumeMode::Max;
  throw InvalidArgument("unknown resume mode '" + std::string(s) + "' (expected sum|max)");
}

inline KernelForm parse_kernel_form(std::string_view s) {
  if (s == "distance") return KernelForm::Distance;
  if (s == "similarity") return KernelForm::Similarity;
  throw InvalidArgument("unknown kernel form '" + std::string(s) +
                        "' (expected distance|similarity)");
}

}  // namespace rfn
