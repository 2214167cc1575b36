#include "rfn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rfn {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& e : entries) {
    os << (e.passed ? "ok   " : "FAIL ") << e.name << " max_rel=" << std::scientific
       << e.max_rel_error << " max_abs=" << e.max_abs_error << " at " << e.worst_index;
    if (e.kinks) os << " kinks=" << e.kinks;
    os << "\n";
  }
  os << (passed ? "PASS" : "FAIL") << " max_rel=" << max_rel_error << " kinks=" << kinks << "/"
     << checked << "\n";
  return os.str();
}

namespace {

double relative(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

GradCheckReport grad_check(std::vector<NamedTensor> point,
                           const std::function<double(const std::vector<NamedTensor>&)>& f,
                           const std::vector<Tensor<double>>& analytic,
                           const GradCheckOptions& opts) {
  if (analytic.size() != point.size()) {
    throw ShapeError("grad_check: analytic gradient count does not match parameter count");
  }
  const double base = f(point);
  if (!std::isfinite(base)) throw NumericError("grad_check: loss is non-finite at the point");

  GradCheckReport report;
  for (std::size_t pi = 0; pi < point.size(); ++pi) {
    auto& param = point[pi].value;
    require_same_shape(param.shape(), analytic[pi].shape(), "grad_check");
    GradCheckEntry entry;
    entry.name = point[pi].name;
    for (std::size_t j = 0; j < param.size(); ++j) {
      const double orig = param[j];
      double plus = 0.0, minus = 0.0;
      try {
        param[j] = orig + opts.eps;
        plus = f(point);
        param[j] = orig - opts.eps;
        minus = f(point);
      } catch (const NumericError& e) {
        throw NumericError("grad_check: perturbing '" + entry.name + "' element " +
                           std::to_string(j) + ": " + e.what());
      }
      param[j] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite loss when perturbing '" + entry.name +
                           "' element " + std::to_string(j));
      }
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      const double a = analytic[pi][j];
      const double abs_err = std::abs(a - numeric);
      const double rel = relative(a, numeric, opts.floor);
      ++entry.checked;
      if (rel >= opts.tolerance && opts.skip_kinks) {
        // A stencil straddling a kink: the analytic value follows the smooth
        // side, while the two one-sided slopes disagree with each other.
        const double fwd = (plus - base) / opts.eps;
        const double bwd = (base - minus) / opts.eps;
        const double side = std::min(relative(a, fwd, opts.floor), relative(a, bwd, opts.floor));
        if (side < opts.kink_match && relative(fwd, bwd, opts.floor) > 10.0 * side) {
          ++entry.kinks;
          continue;
        }
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = j;
      }
    }
    entry.passed = entry.max_rel_error < opts.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.checked += entry.checked;
    report.kinks += entry.kinks;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::pair<double, std::vector<Tensor<double>>> tape_value_and_grad(
    const std::vector<NamedTensor>& point, const TapeBuilder& build) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& p : point) leaves.push_back(tape.leaf(p.value, true, p.name));
  const Var<double> out = build(tape, leaves);
  tape.backward(out);
  std::vector<Tensor<double>> grads;
  for (const auto& l : leaves) {
    grads.push_back(tape.has_grad(l) ? tape.grad(l) : Tensor<double>(l.shape()));
  }
  return {out.value().item(), std::move(grads)};
}

GradCheckReport grad_check_tape(const std::vector<NamedTensor>& point, const TapeBuilder& build,
                                const GradCheckOptions& opts) {
  auto [value, grads] = tape_value_and_grad(point, build);
  (void)value;
  auto f = [&build](const std::vector<NamedTensor>& at) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& p : at) leaves.push_back(tape.leaf(p.value, false, p.name));
    return build(tape, leaves).value().item();
  };
  return grad_check(point, f, grads, opts);
}

}  // namespace rfn
