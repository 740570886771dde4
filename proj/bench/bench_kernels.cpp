// Serial reference vs OpenMP convolution kernels on cell-sized shapes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "nascost/kernels.hpp"

namespace k = nascost::kernels;

namespace {

struct Case {
  const char* name;
  k::ConvGeometry g;
};

template <class F>
double time_ms(F&& f, int reps) {
  f();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
  std::vector<Case> cases = {
      {"pointwise 64x8x8x8", {64, 8, 8, 8, 8, 1, 1, 0, 1, 1}},
      {"depthwise3 64x8x8x8", {64, 8, 8, 8, 8, 3, 1, 1, 1, 8}},
      {"depthwise5 dil2 64x8x8x8", {64, 8, 8, 8, 8, 5, 1, 4, 2, 8}},
      {"dense3 64x16x16x16", {64, 16, 16, 16, 16, 3, 1, 1, 1, 1}},
  };
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  std::printf("threads %d\n", omp_get_max_threads());
  std::printf("%-26s %-10s %10s %10s %8s %10s\n", "shape", "kernel", "serial ms", "omp ms", "speedup", "max diff");
  for (const Case& c : cases) {
    const auto& g = c.g;
    std::vector<double> x(g.input_size()), w(g.weight_size()), go(g.output_size());
    for (auto* v : {&x, &w, &go})
      for (double& e : *v) e = nd(rng);
    std::vector<double> a(g.output_size()), b(g.output_size());
    std::vector<double> gx_a(g.input_size()), gx_b(g.input_size()), gw_a(g.weight_size()), gw_b(g.weight_size());

    auto row = [&](const char* kernel, double ts, double tp, double diff) {
      std::printf("%-26s %-10s %10.3f %10.3f %8.2f %10.2e\n", c.name, kernel, ts, tp, ts / tp, diff);
    };
    row("forward",
        time_ms([&] { k::serial::conv2d_forward<double>(g, x, w, a); }, reps),
        time_ms([&] { k::conv2d_forward<double>(g, x, w, b); }, reps), max_abs_diff(a, b));
    row("grad_x",
        time_ms([&] { k::serial::conv2d_backward_input<double>(g, go, w, gx_a); }, reps),
        time_ms([&] { k::conv2d_backward_input<double>(g, go, w, gx_b); }, reps), max_abs_diff(gx_a, gx_b));
    row("grad_w",
        time_ms([&] { k::serial::conv2d_backward_weight<double>(g, go, x, gw_a); }, reps),
        time_ms([&] { k::conv2d_backward_weight<double>(g, go, x, gw_b); }, reps), max_abs_diff(gw_a, gw_b));
  }
  return 0;
}
