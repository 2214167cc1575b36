// Serial versus OpenMP kernel timings; also confirms the two agree bitwise.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "rfn/kernels.hpp"
#include "rfn/rng.hpp"
#include "rfn/rotation.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& f, int reps) {
  f();
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

std::vector<float> random_vec(std::size_t n, rfn::Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

bool report(const char* name, const std::vector<float>& a, const std::vector<float>& b,
            double ts, double tp) {
  const bool same = std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, ts, tp,
              ts / tp, same ? "bitwise-equal" : "MISMATCH");
  return same;
}

}  // namespace

int main(int argc, char** argv) {
  namespace k = rfn::kernels;
  const int reps = argc > 1 && std::string(argv[1]) == "--quick" ? 1 : 10;
  std::printf("openmp %s, %d thread(s)\n", k::openmp_enabled() ? "on" : "off", k::max_threads());
  // Both variants add each output in the same order; the omp ones stream rows
  // through a contiguous inner loop, which is faster even on one thread.
  if (k::max_threads() == 1) std::printf("single thread: gaps below come from loop order only\n");
  rfn::Rng rng(7);
  bool ok = true;

  {
    const std::size_t m = 256, kk = 1024, n = 64;
    const auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
    std::vector<float> cs(m * n), cp(m * n);
    const double ts = time_ms([&] { k::serial::matmul<float>(a, b, cs, m, kk, n); }, reps);
    const double tp = time_ms([&] { k::omp::matmul<float>(a, b, cp, m, kk, n); }, reps);
    ok &= report("matmul 256x1024x64", cs, cp, ts, tp);
  }
  {
    k::ConvGeometry g;
    g.batch = 32, g.height = 16, g.width = 16, g.in_channels = 8;
    g.kernel_h = g.kernel_w = 3, g.out_channels = 16, g.stride = 2, g.pad = 1;
    const auto x = random_vec(g.batch * g.height * g.width * g.in_channels, rng);
    const auto w = random_vec(9 * g.in_channels * g.out_channels, rng);
    const std::size_t ny = g.batch * g.out_height() * g.out_width() * g.out_channels;
    std::vector<float> ys(ny), yp(ny);
    const double ts = time_ms([&] { k::serial::conv2d_forward<float>(x, w, ys, g); }, reps);
    const double tp = time_ms([&] { k::omp::conv2d_forward<float>(x, w, yp, g); }, reps);
    ok &= report("conv2d forward", ys, yp, ts, tp);

    const auto gy = random_vec(ny, rng);
    std::vector<float> gxs(x.size()), gxp(x.size()), gks(w.size()), gkp(w.size());
    const double ts2 = time_ms([&] { k::serial::conv2d_backward_input<float>(gy, w, gxs, g); }, reps);
    const double tp2 = time_ms([&] { k::omp::conv2d_backward_input<float>(gy, w, gxp, g); }, reps);
    ok &= report("conv2d backward input", gxs, gxp, ts2, tp2);
    const double ts3 = time_ms([&] { k::serial::conv2d_backward_kernel<float>(x, gy, gks, g); }, reps);
    const double tp3 = time_ms([&] { k::omp::conv2d_backward_kernel<float>(x, gy, gkp, g); }, reps);
    ok &= report("conv2d backward kernel", gks, gkp, ts3, tp3);
  }
  {
    const std::size_t size = 8, batch = 128, channels = 16;
    const auto map = rfn::rotation_map(size, 0.7);
    const auto in = random_vec(batch * size * size * channels, rng);
    std::vector<float> os(in.size()), op(in.size());
    const double ts = time_ms([&] { k::serial::gather_forward<float>(in, os, batch, channels, *map); }, reps);
    const double tp = time_ms([&] { k::omp::gather_forward<float>(in, op, batch, channels, *map); }, reps);
    ok &= report("bilinear gather forward", os, op, ts, tp);
  }
  return ok ? 0 : 1;
}
