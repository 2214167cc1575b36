#include <numbers>

#include "rfn/rotation.hpp"
#include "test_util.hpp"

using namespace rfn;
using rfn::test::random_tensor;

namespace {

// Per-pixel inverse-mapping bilinear rotation written from the definition.
Tensor<double> bilinear_oracle(const Tensor<double>& in, double theta) {
  const std::size_t n = in.shape()[0];
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  Tensor<double> out(in.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      // Counterclockwise on screen: destination (x, y) = (j - c, c - i) comes
      // from source (x, y) rotated by -theta.
      const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
      const double xs = std::cos(theta) * x + std::sin(theta) * y;
      const double ys = -std::sin(theta) * x + std::cos(theta) * y;
      const double si = c - ys, sj = c + xs;
      const double fi = std::floor(si), fj = std::floor(sj);
      double acc = 0.0;
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
          const double ii = fi + di, jj = fj + dj;
          const double w = (1.0 - std::abs(si - ii)) * (1.0 - std::abs(sj - jj));
          if (ii < 0 || jj < 0 || ii >= static_cast<double>(n) || jj >= static_cast<double>(n)) continue;
          acc += w * in[static_cast<std::size_t>(ii) * n + static_cast<std::size_t>(jj)];
        }
      out[i * n + j] = acc;
    }
  return out;
}

}  // namespace

TEST_SUITE("angle_set") {
  TEST_CASE("uniform spacing from zero") {
    auto a = angle_set(4);
    REQUIRE(a.angles.size() == 4);
    CHECK(a.angles[0] == 0.0);
    CHECK(a.angles[1] == doctest::Approx(std::numbers::pi / 2));
    CHECK(a.angles[2] == doctest::Approx(std::numbers::pi));
    CHECK(a.angles[3] == doctest::Approx(3 * std::numbers::pi / 2));
    CHECK(angle_set(1).angles == std::vector<double>{0.0});
    CHECK(angle_set(8).angles[1] == doctest::Approx(std::numbers::pi / 4));
    CHECK_THROWS_AS(angle_set(0), InvalidArgument);
  }
}

TEST_SUITE("rotate_map") {
  TEST_CASE("zero angle is the identity bitwise") {
    Rng rng(1);
    auto x = random_tensor<float>(Shape{7, 7}, rng);
    CHECK(test::bitwise_equal(rotate_map(x, 0.0), x));
  }

  TEST_CASE("quarter turn of a 2x2 plane") {
    Tensor<double> x(Shape{2, 2}, {1, 2, 3, 4});
    CHECK(rotate_map(x, std::numbers::pi / 2).vec() == std::vector<double>{2, 4, 1, 3});
  }

  TEST_CASE("non-square planes are rejected") {
    CHECK_THROWS_AS(rotate_map(Tensor<double>(Shape{2, 3}), 0.3), InvalidArgument);
  }

  TEST_CASE("delta map at 45 degrees matches the bilinear oracle") {
    for (std::size_t p = 0; p < 16; ++p) {
      Tensor<double> x(Shape{4, 4});
      x[p] = 1.0;
      auto y = rotate_map(x, std::numbers::pi / 4);
      auto ref = bilinear_oracle(x, std::numbers::pi / 4);
      for (std::size_t i = 0; i < 16; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
  }

  TEST_CASE("random maps and angles match the bilinear oracle") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + rng.below(9);
      auto x = random_tensor(Shape{n, n}, rng);
      const double theta = rng.uniform(-7.0, 7.0);
      auto y = rotate_map(x, theta);
      auto ref = bilinear_oracle(x, theta);
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("composition of exact angles") {
    Rng rng(3);
    auto x = random_tensor<float>(Shape{6, 6}, rng);
    const double q = std::numbers::pi / 2;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        CHECK(test::bitwise_equal(rotate_map(rotate_map(x, a * q), b * q), rotate_map(x, (a + b) * q)));
      }
  }

  TEST_CASE("four quarter turns return the input and mass is conserved") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
      const std::size_t n = 1 + rng.below(12);
      auto x = random_tensor<float>(Shape{n, n}, rng);
      Tensor<float> y = x;
      for (int k = 0; k < 4; ++k) {
        y = rotate_map(y, std::numbers::pi / 2);
        double s0 = 0, s1 = 0;
        for (float v : x.data()) s0 += v;
        for (float v : y.data()) s1 += v;
        CHECK(s1 == doctest::Approx(s0).epsilon(1e-6));
      }
      CHECK(test::bitwise_equal(x, y));
    }
  }
}

TEST_SUITE("rotated stack") {
  TEST_CASE("single angle holds the input only") {
    Rng rng(5);
    auto x = random_tensor<float>(Shape{4, 4, 3}, rng);
    auto s = build_rotated_stack(x, angle_set(1));
    REQUIRE(s.per_angle.size() == 1);
    CHECK(test::bitwise_equal(s.per_angle[0], x));
    CHECK(test::bitwise_equal(s.concatenated, x));
  }

  TEST_CASE("constant map gives identical copies") {
    Tensor<float> x(Shape{5, 5, 2}, 0.75f);
    auto s = build_rotated_stack(x, angle_set(4));
    for (const auto& p : s.per_angle) CHECK(test::bitwise_equal(p, x));
  }

  TEST_CASE("corner delta walks the four corners") {
    Tensor<double> x(Shape{3, 3, 1});
    x[0] = 1.0;
    auto s = build_rotated_stack(x, angle_set(4));
    // Counterclockwise: top-left -> bottom-left -> bottom-right -> top-right.
    const std::size_t expect[] = {0, 6, 8, 2};
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t p = 0; p < 9; ++p) CHECK(s.per_angle[k][p] == (p == expect[k] ? 1.0 : 0.0));
    }
  }

  TEST_CASE("per-channel rotation and angle-major concatenation") {
    Rng rng(6);
    const std::size_t h = 5, c = 3, n = 6;
    auto x = random_tensor(Shape{h, h, c}, rng);
    const auto set = angle_set(n);
    auto s = build_rotated_stack(x, set);
    CHECK(s.concatenated.shape() == Shape{h, h, n * c});
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t ch = 0; ch < c; ++ch) {
        Tensor<double> plane(Shape{h, h});
        for (std::size_t p = 0; p < h * h; ++p) plane[p] = x[p * c + ch];
        auto r = rotate_map(plane, set.angles[k]);
        for (std::size_t p = 0; p < h * h; ++p) {
          CHECK(s.per_angle[k][p * c + ch] == r[p]);
          CHECK(s.concatenated[p * n * c + k * c + ch] == r[p]);
        }
      }
  }

  TEST_CASE("batched stack matches the per-sample stack") {
    Rng rng(7);
    const std::size_t b = 3, h = 4, c = 2, n = 3;
    auto x = random_tensor<float>(Shape{b, h, h, c}, rng);
    Tape<float> t;
    auto st = rotate_stack(t.leaf(x), angle_set(n)).value();
    CHECK(st.shape() == Shape{b * n, h, h, c});
    for (std::size_t i = 0; i < b; ++i) {
      Tensor<float> xi(Shape{h, h, c});
      std::copy(x.ptr() + i * h * h * c, x.ptr() + (i + 1) * h * h * c, xi.ptr());
      auto ref = build_rotated_stack(xi, angle_set(n));
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t p = 0; p < h * h * c; ++p)
          CHECK(st[(i * n + k) * h * h * c + p] == ref.per_angle[k][p]);
    }
  }
}
