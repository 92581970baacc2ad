#include <benchmark/benchmark.h>

#include <random>

#include "cvir/nn/kernels.hpp"

namespace {

using namespace cvir::nn;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// args: spatial size, in channels, out channels, kernel, stride
ConvGeometry geometry(const benchmark::State& s) {
  ConvGeometry g;
  g.in_h = g.in_w = static_cast<std::size_t>(s.range(0));
  g.in_c = static_cast<std::size_t>(s.range(1));
  g.out_c = static_cast<std::size_t>(s.range(2));
  g.kernel = static_cast<std::size_t>(s.range(3));
  g.stride = static_cast<std::size_t>(s.range(4));
  return g;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto g = geometry(state);
  const auto x = noise(g.in_size(), 1), w = noise(g.weight_count(), 2), b = noise(g.out_c, 3);
  std::vector<double> y(g.out_size());
  for (auto _ : state) {
    conv2d_forward(x, w, b, g, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(g.out_size() * g.kernel * g.kernel * g.in_c));
}

void BM_Conv2dBackward(benchmark::State& state) {
  const auto g = geometry(state);
  const auto x = noise(g.in_size(), 1), w = noise(g.weight_count(), 2), dy = noise(g.out_size(), 3);
  std::vector<double> dx(g.in_size()), dw(g.weight_count()), db(g.out_c);
  for (auto _ : state) {
    conv2d_backward(x, w, dy, g, dx, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

#define CONV_ARGS                        \
  Args({32, 2, 16, 3, 1})                \
      ->Args({32, 16, 16, 3, 1})         \
      ->Args({32, 16, 32, 3, 2})         \
      ->Args({32, 16, 32, 1, 2})         \
      ->Args({8, 64, 128, 3, 2})

BENCHMARK(BM_Conv2dForward)->CONV_ARGS;
BENCHMARK(BM_Conv2dBackward)->CONV_ARGS;

void BM_DenseForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), m = static_cast<std::size_t>(state.range(1));
  const auto x = noise(n, 1), w = noise(n * m, 2), b = noise(m, 3);
  std::vector<double> y(m);
  for (auto _ : state) {
    dense_forward(x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_DenseForward)->Args({32, 256})->Args({256, 64})->Args({1024, 128});

}  // namespace
