#include <benchmark/benchmark.h>

#include "whisperline/layers.hpp"
#include "whisperline/models.hpp"
#include "whisperline/nn_kernels.hpp"
#include "whisperline/rng.hpp"

using namespace whisperline;

namespace {

std::vector<float> random_frames(int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> x(static_cast<std::size_t>(n) * dim);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.5, 1.5));
  return x;
}

}  // namespace

static void BM_Arch4ForwardFrame(benchmark::State& state) {
  const Network net = build("arch4", 128, 3);
  const auto x = random_frames(1, 128, 11);
  NetCache cache;
  std::vector<float> p;
  for (auto _ : state) {
    net_forward(net, x.data(), 1, false, nullptr, cache, p);
    benchmark::DoNotOptimize(p.data());
  }
}
BENCHMARK(BM_Arch4ForwardFrame);

static void BM_Arch4ForwardBatch128(benchmark::State& state) {
  const Network net = build("arch4", 128, 3);
  const auto x = random_frames(128, 128, 12);
  NetCache cache;
  std::vector<float> p;
  for (auto _ : state) {
    net_forward(net, x.data(), 128, false, nullptr, cache, p);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Arch4ForwardBatch128);

static void BM_Arch4TrainStepBatch128(benchmark::State& state) {
  Network net = build("arch4", 128, 3);
  const auto x = random_frames(128, 128, 13);
  NetCache cache;
  AdamState adam;
  Rng dropout_rng(17);
  std::vector<float> p, grad_out(256), grads;
  for (auto _ : state) {
    net_forward(net, x.data(), 128, true, &dropout_rng, cache, p);
    for (int r = 0; r < 128; ++r)
      nn::cross_entropy<float>(&p[2 * r], 2, r & 1, &grad_out[2 * r], 1.0f / 128.0f);
    grads.assign(net.total_params(), 0.0f);
    net_backward(net, grad_out.data(), 128, cache, grads);
    adam_step(net, grads, adam, 1e-3f);
    benchmark::DoNotOptimize(grads.data());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Arch4TrainStepBatch128);

static void BM_Lstm64x2Sequence(benchmark::State& state) {
  const Network net = build("lstm64x2", 64, 3);
  const int steps = static_cast<int>(state.range(0));
  const auto x = random_frames(steps, 64, 14);
  NetCache cache;
  std::vector<float> p;
  for (auto _ : state) {
    net_forward(net, x.data(), steps, false, nullptr, cache, p);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_Lstm64x2Sequence)->Arg(30)->Arg(120);

static void BM_AdamStepArch4(benchmark::State& state) {
  Network net = build("arch4", 128, 3);
  AdamState adam;
  Rng rng(15);
  std::vector<float> grads(net.total_params());
  for (auto& g : grads) g = static_cast<float>(rng.uniform(-0.01, 0.01));
  for (auto _ : state) {
    adam_step(net, grads, adam, 1e-3f);
    benchmark::DoNotOptimize(adam.m.data());
  }
}
BENCHMARK(BM_AdamStepArch4);

BENCHMARK_MAIN();
