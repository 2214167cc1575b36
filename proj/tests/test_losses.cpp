#include <numbers>

#include "rfn/losses.hpp"
#include "rfn/rotation.hpp"
#include "test_util.hpp"

using namespace rfn;
using rfn::test::random_tensor;

namespace {

// Eq.-level reference: normalize, kernel, 2(1 - k), written out directly.
double ref_distance(const Tensor<double>& a, const Tensor<double>& b, double sigma) {
  double na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] / na - b[i] / nb;
    d2 += t * t;
  }
  return 2.0 * (1.0 - std::exp(-d2 / (2 * sigma * sigma)));
}

Tensor<double> rot90(const Tensor<double>& x) {
  return build_rotated_stack(x, angle_set(4)).per_angle[1];
}

}  // namespace

TEST_SUITE("rbf_kernel") {
  TEST_CASE("self similarity and a known value") {
    const std::vector<double> a{0.3, -1.2, 4.0};
    CHECK(rbf_kernel(a, a, 0.7) == 1.0);
    const std::vector<double> z{0.0}, o{1.0};
    CHECK(rbf_kernel(z, o, 1.0) == doctest::Approx(0.6065306597126334).epsilon(1e-12));
  }

  TEST_CASE("monotone in distance") {
    double prev = 2.0;
    for (int i = 0; i <= 40; ++i) {
      const std::vector<double> a{0.0, 0.0}, b{0.1 * i, 0.05 * i};
      const double k = rbf_kernel(a, b, 1.3);
      CHECK(k <= prev);
      CHECK(k > 0.0);
      prev = k;
    }
  }

  TEST_CASE("errors") {
    const std::vector<double> a{1.0}, b{1.0, 2.0};
    CHECK_THROWS_AS(rbf_kernel(a, b, 1.0), ShapeError);
    CHECK_THROWS_AS(rbf_kernel(a, a, 0.0), InvalidArgument);
  }
}

TEST_SUITE("invariance_distance") {
  TEST_CASE("zero on identical and on rotation-symmetric maps") {
    Rng rng(1);
    auto x = random_tensor(Shape{4, 4, 2}, rng);
    CHECK(invariance_distance(x, x, 1.0) == 0.0);
    Tensor<double> c(Shape{5, 5, 3}, 0.4);
    CHECK(invariance_distance(c, rot90(c), 1.0) == 0.0);
  }

  TEST_CASE("two-element vectors by hand") {
    // a^ = (0.6, 0.8), b^ = (1, 0): squared gap 0.8, k = exp(-0.4).
    Tensor<double> a(Shape{2}, {3, 4}), b(Shape{2}, {1, 0});
    CHECK(invariance_distance(a, b, 1.0) == doctest::Approx(2 * (1 - std::exp(-0.4))).epsilon(1e-14));
    CHECK(invariance_distance(a, b, 1.0, KernelForm::Similarity) ==
          doctest::Approx(std::exp(-0.4)).epsilon(1e-14));
  }

  TEST_CASE("symmetric and bounded by two") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      auto a = random_tensor(Shape{6}, rng), b = random_tensor(Shape{6}, rng);
      const double s = rng.uniform(0.1, 3.0);
      const double d = invariance_distance(a, b, s);
      CHECK(d == doctest::Approx(invariance_distance(b, a, s)).epsilon(1e-14));
      CHECK(d >= 0.0);
      CHECK(d <= 2.0);
      CHECK(d == doctest::Approx(ref_distance(a, b, s)).epsilon(1e-12));
    }
  }

  TEST_CASE("all-zero input is a degenerate normalization") {
    Tensor<double> z(Shape{3}), x(Shape{3}, 1.0);
    CHECK_THROWS_AS(invariance_distance(z, x, 1.0), NumericError);
  }
}

TEST_SUITE("ri losses") {
  TEST_CASE("perfect invariance gives zero") {
    Rng rng(3);
    std::vector<Tensor<double>> ri;
    std::vector<std::vector<Tensor<double>>> rot;
    for (int i = 0; i < 3; ++i) {
      ri.push_back(random_tensor(Shape{3, 3, 2}, rng));
      rot.push_back({ri.back(), ri.back(), ri.back()});
    }
    CHECK(l_ri_star(ri, rot, 1.0).value == 0.0);
    CHECK(l_ri_full(ri, rot, 1.0).value == 0.0);
  }

  TEST_CASE("rotation-symmetric inputs vanish in both forms") {
    std::vector<Tensor<double>> ri{Tensor<double>(Shape{4, 4, 1}, 2.0)};
    std::vector<std::vector<Tensor<double>>> rot{{rot90(ri[0]), rot90(rot90(ri[0])), rot90(rot90(rot90(ri[0])))}};
    CHECK(l_ri_star(ri, rot, 1.0).value == 0.0);
    CHECK(l_ri_full(ri, rot, 1.0).value == 0.0);
  }

  TEST_CASE("single sample and single angle") {
    Rng rng(4);
    auto a = random_tensor(Shape{5}, rng), b = random_tensor(Shape{5}, rng);
    const double d = invariance_distance(a, b, 0.8);
    CHECK(l_ri_star<double>({a}, {{b}}, 0.8).value == doctest::Approx(d).epsilon(1e-14));
    CHECK(l_ri_full<double>({a}, {{b}}, 0.8).value == doctest::Approx(0.5 * d).epsilon(1e-14));
  }

  TEST_CASE("no rotated copies raises the flag") {
    auto r = l_ri_star<double>({Tensor<double>(Shape{2}, 1.0)}, {{}}, 1.0);
    CHECK(r.value == 0.0);
    CHECK(r.no_rotations);
  }

  TEST_CASE("kernel of the mean differs from the mean of kernels") {
    Rng rng(5);
    std::vector<Tensor<double>> ri{random_tensor(Shape{4}, rng), random_tensor(Shape{4}, rng)};
    std::vector<std::vector<Tensor<double>>> rot{
        {random_tensor(Shape{4}, rng), random_tensor(Shape{4}, rng)},
        {random_tensor(Shape{4}, rng), random_tensor(Shape{4}, rng)}};
    const double star = l_ri_star(ri, rot, 1.0).value;
    double expect = 0;
    for (int i = 0; i < 2; ++i) {
      Tensor<double> m(Shape{4});
      for (std::size_t p = 0; p < 4; ++p) m[p] = 0.5 * (rot[i][0][p] + rot[i][1][p]);
      expect += ref_distance(ri[i], m, 1.0) / 2;
    }
    CHECK(star == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(star - l_ri_full(ri, rot, 1.0).value) > 1e-6);
  }

  TEST_CASE("full form matches a double loop") {
    Rng rng(6);
    for (int t = 0; t < 10; ++t) {
      const std::size_t n_samples = 1 + rng.below(5), angles = 1 + rng.below(7);
      std::vector<Tensor<double>> ri;
      std::vector<std::vector<Tensor<double>>> rot(n_samples);
      for (std::size_t i = 0; i < n_samples; ++i) {
        ri.push_back(random_tensor(Shape{3, 3, 2}, rng));
        for (std::size_t j = 0; j < angles; ++j) rot[i].push_back(random_tensor(Shape{3, 3, 2}, rng));
      }
      double sum = 0;
      for (std::size_t i = 0; i < n_samples; ++i)
        for (std::size_t j = 0; j < angles; ++j) sum += ref_distance(ri[i], rot[i][j], 1.1);
      const double oracle = sum / (2.0 * static_cast<double>(n_samples * angles));
      CHECK(std::abs(l_ri_full(ri, rot, 1.1).value - oracle) < 1e-10);
    }
  }

  TEST_CASE("loss gradients at 64-bit") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      Rng rng(600 + s);
      const std::size_t b = 1 + rng.below(3), m = 1 + rng.below(3);
      std::vector<NamedTensor> pt{{"ri", random_tensor(Shape{b, 2, 2, 3}, rng)}};
      for (std::size_t j = 0; j < m; ++j) pt.push_back({"rot" + std::to_string(j), random_tensor(Shape{b, 2, 2, 3}, rng)});
      for (int full = 0; full < 2; ++full) {
        auto report = test::check_op(pt, [&](Tape<double>&, const std::vector<Var<double>>& v) {
          std::vector<Var<double>> rot(v.begin() + 1, v.end());
          return full ? l_ri_full(v[0], rot, 0.9, KernelForm::Distance)
                      : l_ri_star(v[0], rot, 0.9, KernelForm::Distance);
        }, 1e-5);
        INFO(report.summary());
        CHECK(report.passed);
      }
    }
  }
}

TEST_SUITE("task losses") {
  TEST_CASE("classification") {
    CHECK(classification_loss(Tensor<double>(Shape{1, 3}, {0, 800, 0}), {1}) == doctest::Approx(0.0));
    CHECK(classification_loss(Tensor<double>(Shape{2, 4}, 0.3), {0, 3}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
    Rng rng(7);
    auto logits = random_tensor(Shape{2, 3}, rng, -2, 2);
    const std::vector<int> labels{2, 0};
    double expect = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      double z = 0;
      for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits[i * 3 + k]);
      expect -= std::log(std::exp(logits[i * 3 + static_cast<std::size_t>(labels[i])]) / z);
    }
    CHECK(classification_loss(logits, labels) == doctest::Approx(expect / 2).epsilon(1e-13));
    CHECK_THROWS_AS(classification_loss(logits, {3, 0}), InvalidArgument);
  }

  TEST_CASE("cross-entropy gradient is softmax minus one-hot") {
    Rng rng(8);
    auto logits = random_tensor(Shape{3, 4}, rng, -2, 2);
    const std::vector<int> labels{1, 3, 0};
    Tape<double> t;
    auto x = t.leaf(logits, true);
    t.backward(ops::softmax_cross_entropy(x, labels));
    for (std::size_t i = 0; i < 3; ++i) {
      double z = 0;
      for (std::size_t k = 0; k < 4; ++k) z += std::exp(logits[i * 4 + k]);
      for (std::size_t k = 0; k < 4; ++k) {
        const double g = std::exp(logits[i * 4 + k]) / z - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0);
        CHECK(t.grad(x)[i * 4 + k] == doctest::Approx(g / 3).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("smooth L1 branches") {
    Tensor<double> z(Shape{1}, {0.0});
    CHECK(regression_loss(z, z) == 0.0);
    CHECK(regression_loss(Tensor<double>(Shape{1}, {2.0}), z) == 1.5);
    CHECK(regression_loss(Tensor<double>(Shape{1}, {0.5}), z) == 0.125);
    CHECK_THROWS_AS(regression_loss(Tensor<double>(Shape{2}), z), ShapeError);
  }
}

TEST_SUITE("total_loss") {
  TEST_CASE("weighted sum under the default weights") {
    LossConfig cfg;
    CHECK(total_loss(0, 0, 0, cfg).total == 0.0);
    const auto r = total_loss(1, 1, 1, cfg);
    CHECK(r.total == doctest::Approx(1.7).epsilon(1e-15));
    CHECK(r.cls == 1.0);
    CHECK(r.reg == 1.0);
    CHECK(r.ri == 1.0);
    cfg.lambda_ri = 0;
    CHECK(total_loss(1, 1, 5, cfg).total == doctest::Approx(1.2));
  }

  TEST_CASE("non-finite terms are named") {
    try {
      total_loss(1, std::nan(""), 0, LossConfig{});
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("reg") != std::string::npos);
    }
    CHECK_THROWS_AS(total_loss(-1, 0, 0, LossConfig{}), InvalidArgument);
  }

  TEST_CASE("differentiable total matches the plain total") {
    Tape<double> t;
    auto v = total_loss(t.leaf(Tensor<double>::scalar(0.7)), t.leaf(Tensor<double>::scalar(0.4)),
                        t.leaf(Tensor<double>::scalar(0.2)), LossConfig{});
    CHECK(v.value().item() == doctest::Approx(total_loss(0.7, 0.4, 0.2, LossConfig{}).total).epsilon(1e-15));
  }

  TEST_CASE("config validation") {
    LossConfig c;
    c.sigma = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.sigma = 1;
    c.lambda_ri = -0.1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("median bandwidth") {
    Tensor<double> a(Shape{3, 2}, {1, 0, 1, 0, 1, 0}), b(Shape{3, 2}, {0, 1, 1, 0, 0, 1});
    // Row gaps: sqrt(2), 0, sqrt(2).
    CHECK(median_bandwidth(a, b) == doctest::Approx(std::sqrt(2.0)));
    CHECK(median_bandwidth(a, a) == 1.0);
  }
}
