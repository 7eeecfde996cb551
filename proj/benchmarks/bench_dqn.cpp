#include <benchmark/benchmark.h>

#include <random>

#include "voxl/dqn.hpp"

namespace {

std::vector<voxl::Transition> batch_for(const voxl::Dims& obs, int n) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  auto vol = [&] {
    std::vector<float> v(obs.count());
    for (auto& x : v) x = u(rng);
    return std::make_shared<const voxl::Volume3D>(obs, std::move(v));
  };
  std::vector<voxl::Transition> out(static_cast<std::size_t>(n));
  for (auto& t : out) {
    t.s = vol();
    t.s_next = vol();
    t.r = 0.5;
  }
  return out;
}

// Observation shapes of the coreset and full-resolution pipelines.
voxl::Dims shape(std::int64_t which) { return which == 0 ? voxl::Dims{15, 15, 9} : voxl::Dims{45, 45, 15}; }

void BM_Forward(benchmark::State& state) {
  const voxl::Dims obs = shape(state.range(0));
  const voxl::QNetwork net = voxl::init_network(obs, 1);
  const auto b = batch_for(obs, 1);
  for (auto _ : state) benchmark::DoNotOptimize(voxl::q_forward(net, *b[0].s));
}

void BM_TrainStep(benchmark::State& state) {
  const voxl::Dims obs = shape(state.range(0));
  voxl::QNetwork net = voxl::init_network(obs, 1);
  const voxl::QNetwork target = net;
  voxl::AdamState adam(net.parameter_count());
  const voxl::TrainHyper hyper;
  const auto b = batch_for(obs, hyper.batch_size);
  for (auto _ : state) benchmark::DoNotOptimize(voxl::td_train_step(net, target, b, hyper, adam));
}

}  // namespace

BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
