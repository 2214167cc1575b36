#include "rfn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rfn/ops.hpp"

namespace rfn {

void LossConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("loss: sigma must be positive, got " + std::to_string(sigma));
  }
  if (lambda_reg < 0.0 || lambda_ri < 0.0) {
    throw InvalidArgument("loss: lambda values must be non-negative");
  }
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, double sigma) {
  if (a.size() != b.size()) {
    throw ShapeError("rbf_kernel: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  if (!(sigma > 0.0)) throw InvalidArgument("rbf_kernel: sigma must be positive");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

namespace {

// Stacks equally shaped tensors into [N, D].
template <typename T>
Tensor<T> rows_of(const std::vector<Tensor<T>>& xs) {
  const std::size_t d = xs.front().size();
  std::vector<T> data;
  data.reserve(xs.size() * d);
  for (const auto& x : xs) {
    require_same_shape(xs.front().shape(), x.shape(), "rows_of");
    data.insert(data.end(), x.data().begin(), x.data().end());
  }
  return Tensor<T>(Shape{xs.size(), d}, std::move(data));
}

template <typename T>
std::vector<Tensor<T>> rotated_batches(const std::vector<std::vector<Tensor<T>>>& rotated,
                                       std::size_t n_samples) {
  if (rotated.size() != n_samples) {
    throw ShapeError("ri loss: " + std::to_string(rotated.size()) + " rotated lists for " +
                     std::to_string(n_samples) + " samples");
  }
  const std::size_t m = rotated.front().size();
  std::vector<Tensor<T>> out;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<Tensor<T>> col;
    for (const auto& per_sample : rotated) {
      if (per_sample.size() != m) throw ShapeError("ri loss: ragged rotated lists");
      col.push_back(per_sample[j]);
    }
    out.push_back(rows_of(col));
  }
  return out;
}

template <typename T, typename F>
RiLoss ri_loss_plain(const std::vector<Tensor<T>>& ri_unrotated,
                     const std::vector<std::vector<Tensor<T>>>& ri_rotated, F&& fn) {
  if (ri_unrotated.empty()) throw InvalidArgument("ri loss: empty batch");
  if (ri_rotated.size() != ri_unrotated.size()) {
    throw ShapeError("ri loss: " + std::to_string(ri_rotated.size()) + " rotated lists for " +
                     std::to_string(ri_unrotated.size()) + " samples");
  }
  if (ri_rotated.front().empty()) return {0.0, true};
  const auto batches = rotated_batches(ri_rotated, ri_unrotated.size());
  Tape<T> tape;
  const auto ri = tape.constant(rows_of(ri_unrotated));
  std::vector<Var<T>> rot;
  for (const auto& b : batches) {
    require_same_shape(ri.shape(), b.shape(), "ri loss");
    rot.push_back(tape.constant(b));
  }
  return {static_cast<double>(fn(ri, rot).value().item()), false};
}

}  // namespace

template <typename T>
double invariance_distance(const Tensor<T>& y0, const Tensor<T>& yr, double sigma,
                           KernelForm form) {
  require_same_shape(y0.shape(), yr.shape(), "invariance_distance");
  Tape<T> tape;
  const Shape flat{1, y0.size()};
  const auto d = ops::rbf_rows(tape.constant(y0.reshaped(flat)), tape.constant(yr.reshaped(flat)),
                               sigma, form);
  return static_cast<double>(d.value()[0]);
}

template <typename T>
RiLoss l_ri_star(const std::vector<Tensor<T>>& ri_unrotated,
                 const std::vector<std::vector<Tensor<T>>>& ri_rotated, double sigma,
                 KernelForm form) {
  return ri_loss_plain(ri_unrotated, ri_rotated,
                       [&](Var<T> ri, const std::vector<Var<T>>& rot) {
                         return l_ri_star(ri, rot, sigma, form);
                       });
}

template <typename T>
RiLoss l_ri_full(const std::vector<Tensor<T>>& ri_unrotated,
                 const std::vector<std::vector<Tensor<T>>>& ri_rotated, double sigma,
                 KernelForm form) {
  return ri_loss_plain(ri_unrotated, ri_rotated,
                       [&](Var<T> ri, const std::vector<Var<T>>& rot) {
                         return l_ri_full(ri, rot, sigma, form);
                       });
}

template <typename T>
double classification_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
  Tape<T> tape;
  return static_cast<double>(
      ops::softmax_cross_entropy(tape.constant(logits), labels).value().item());
}

template <typename T>
double regression_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  Tape<T> tape;
  return static_cast<double>(ops::smooth_l1(tape.constant(pred), target).value().item());
}

LossReport total_loss(double cls, double reg, double ri, const LossConfig& cfg) {
  const std::pair<const char*, double> terms[] = {{"cls", cls}, {"reg", reg}, {"ri", ri}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericError(std::string("total_loss: term '") + name + "' is non-finite");
    if (v < 0.0) throw InvalidArgument(std::string("total_loss: term '") + name + "' is negative");
  }
  return {cls, reg, ri, cls + cfg.lambda_reg * reg + cfg.lambda_ri * ri};
}

template <typename T>
Var<T> l_ri_star(Var<T> ri, const std::vector<Var<T>>& rotated, double sigma, KernelForm form,
                 double norm_floor) {
  if (rotated.empty()) return ri.tape->constant(Tensor<T>::scalar(T{0}));
  return ops::mean(ops::rbf_rows(ri, ops::mean_of(rotated), sigma, form, norm_floor));
}

template <typename T>
Var<T> l_ri_full(Var<T> ri, const std::vector<Var<T>>& rotated, double sigma, KernelForm form) {
  if (rotated.empty()) return ri.tape->constant(Tensor<T>::scalar(T{0}));
  std::vector<Var<T>> terms;
  for (const auto& r : rotated) terms.push_back(ops::mean(ops::rbf_rows(ri, r, sigma, form)));
  const double c = 1.0 / (2.0 * static_cast<double>(rotated.size()));
  return ops::weighted_sum(terms, std::vector<double>(terms.size(), c));
}

template <typename T>
Var<T> total_loss(Var<T> cls, Var<T> reg, Var<T> ri, const LossConfig& cfg) {
  return ops::weighted_sum<T>({cls, reg, ri}, {1.0, cfg.lambda_reg, cfg.lambda_ri});
}

template <typename T>
double median_bandwidth(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "median_bandwidth");
  const std::size_t rows = a.dim(0), d = a.size() / rows;
  std::vector<double> dist(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      na += static_cast<double>(a[r * d + i]) * a[r * d + i];
      nb += static_cast<double>(b[r * d + i]) * b[r * d + i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = (na > 0 ? a[r * d + i] / na : 0.0) - (nb > 0 ? b[r * d + i] / nb : 0.0);
      s += x * x;
    }
    dist[r] = std::sqrt(s);
  }
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(rows / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  double med = *mid;
  if (rows % 2 == 0) {
    med = 0.5 * (med + *std::max_element(dist.begin(), mid));
  }
  return med > 0.0 ? med : 1.0;
}

#define RFN_INSTANTIATE_LOSSES(T)                                                             \
  template double invariance_distance<T>(const Tensor<T>&, const Tensor<T>&, double,          \
                                         KernelForm);                                         \
  template RiLoss l_ri_star<T>(const std::vector<Tensor<T>>&,                                 \
                               const std::vector<std::vector<Tensor<T>>>&, double, KernelForm); \
  template RiLoss l_ri_full<T>(const std::vector<Tensor<T>>&,                                 \
                               const std::vector<std::vector<Tensor<T>>>&, double, KernelForm); \
  template double classification_loss<T>(const Tensor<T>&, const std::vector<int>&);          \
  template double regression_loss<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Var<T> l_ri_star<T>(Var<T>, const std::vector<Var<T>>&, double, KernelForm, double); \
  template Var<T> l_ri_full<T>(Var<T>, const std::vector<Var<T>>&, double, KernelForm);       \
  template Var<T> total_loss<T>(Var<T>, Var<T>, Var<T>, const LossConfig&);                   \
  template double median_bandwidth<T>(const Tensor<T>&, const Tensor<T>&);

RFN_INSTANTIATE_LOSSES(float)
RFN_INSTANTIATE_LOSSES(double)

}  // namespace rfn
