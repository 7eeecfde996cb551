#include <benchmark/benchmark.h>

#include <random>

#include "voxl/coreset.hpp"

namespace {

voxl::Volume3D noise_volume(int edge) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  std::vector<float> v(static_cast<std::size_t>(edge) * edge * edge);
  for (auto& x : v) x = u(rng);
  return {{edge, edge, edge}, std::move(v)};
}

void run_method(benchmark::State& state, voxl::CoresetMethod method) {
  const voxl::Volume3D vol = noise_volume(static_cast<int>(state.range(0)));
  voxl::CoresetConfig cfg;
  cfg.method = method;
  for (auto _ : state) benchmark::DoNotOptimize(voxl::compress(vol, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(vol.size()));
}

void BM_Average(benchmark::State& s) { run_method(s, voxl::CoresetMethod::kAverage); }
void BM_CenterSample(benchmark::State& s) { run_method(s, voxl::CoresetMethod::kCenterSample); }
void BM_MaxEntropy(benchmark::State& s) { run_method(s, voxl::CoresetMethod::kMaxEntropy); }

void BM_EntropyMap(benchmark::State& state) {
  const voxl::Volume3D vol = noise_volume(static_cast<int>(state.range(0)));
  voxl::CoresetConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(voxl::entropy_map(vol, cfg));
}

}  // namespace

BENCHMARK(BM_Average)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CenterSample)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxEntropy)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EntropyMap)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);
