#include <benchmark/benchmark.h>

#include <random>

#include "repfair/data.hpp"
#include "repfair/fairness.hpp"
#include "repfair/models.hpp"
#include "repfair/optim.hpp"
#include "repfair/tape.hpp"
#include "repfair/trainer.hpp"

namespace {

using namespace repfair;

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({r, c});
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Forward + backward of one [m x k] . [k x n] product.
void BM_MatmulBackward(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  Tensor a = random_matrix(m, k, 1);
  Tensor b = random_matrix(k, n, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Var out = tape.sum(tape.matmul(tape.leaf(a), tape.leaf(b)));
    tape.backward(out);
    benchmark::DoNotOptimize(a.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(3 * m * k * n));
}
BENCHMARK(BM_MatmulBackward)->Args({64, 2, 256})->Args({64, 256, 128})->Args({64, 128, 256});

// One epoch of the default 2D setup (16 batches of 64).
void BM_TrainEpoch(benchmark::State& state) {
  const bool repfair = state.range(0) != 0;
  Gauss2dParams dp;
  dp.n_samples = 1024;
  dp.seed = 3;
  const GroupedDataset ds = make_gauss2d(dp);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.probe_batches = repfair ? 0 : 4;
  if (repfair) cfg.max_grad_norm = 2.0;
  GeneratorNet g = GeneratorNet::create(cfg.noise_dim, {128, 256}, 2, 0, 0, 11);
  DiscriminatorNet d = DiscriminatorNet::create(2, {256, 128}, 0, 0, 12);
  for (auto _ : state) {
    RunTelemetry t = train(g, d, ds, cfg);
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EnergyDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor real = random_matrix(n, 2, 5);
  const Tensor fake = random_matrix(n, 2, 6);
  for (auto _ : state) benchmark::DoNotOptimize(quality_proxy(real, fake));
}
BENCHMARK(BM_EnergyDistance)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
