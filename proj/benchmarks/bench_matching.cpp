#include <benchmark/benchmark.h>

#include "cvir/deepcvir.hpp"
#include "cvir/matchers.hpp"
#include "cvir/retrieval.hpp"

namespace {

using namespace cvir;

EmbeddingSet bench_set(std::size_t per_class) {
  SyntheticConfig cfg;
  cfg.per_class = per_class;
  cfg.seed = 1;
  return generate_synthetic(cfg);
}

void BM_DmlScore(benchmark::State& state) {
  const auto model = build_model({static_cast<int>(state.range(0))}, 1024, {}, 1);
  const auto set = bench_set(2);
  const auto& g = set[set.indices_of(View::ground)[0]].vector;
  const auto& a = set[set.indices_of(View::aerial)[0]].vector;
  for (auto _ : state) benchmark::DoNotOptimize(model.score(g, a));
  state.counters["params"] = static_cast<double>(model.param_count());
}
BENCHMARK(BM_DmlScore)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_EuclideanScore(benchmark::State& state) {
  const auto set = bench_set(2);
  const auto& g = set[0].vector;
  const auto& a = set[1].vector;
  for (auto _ : state) benchmark::DoNotOptimize(euclidean_score(g, a));
}
BENCHMARK(BM_EuclideanScore);

void BM_MahalanobisScore(benchmark::State& state) {
  const auto set = bench_set(100);
  const auto cov = fit_covariance(set);
  const auto& g = set[0].vector;
  const auto& a = set[1].vector;
  for (auto _ : state) benchmark::DoNotOptimize(mahalanobis_score(g, a, cov));
}
BENCHMARK(BM_MahalanobisScore)->Unit(benchmark::kMicrosecond);

// full ground x aerial score table for a 6-class validation-sized set
void BM_ScoreMatrixEuclidean(benchmark::State& state) {
  const auto set = bench_set(static_cast<std::size_t>(state.range(0)));
  const auto m = Matcher::euclidean();
  for (auto _ : state) {
    ScoreMatrix sm(set, m);
    benchmark::DoNotOptimize(sm.at(0, 0));
  }
}
BENCHMARK(BM_ScoreMatrixEuclidean)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
