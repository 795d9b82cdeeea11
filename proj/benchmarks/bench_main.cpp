#include <benchmark/benchmark.h>

#include "incpvae/adam.hpp"
#include "incpvae/metrics.hpp"
#include "incpvae/model.hpp"
#include "incpvae/ops.hpp"

namespace {

using namespace incpvae;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = Tensor::randn({n, n}, 1);
  const auto b = Tensor::randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).values().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto b = Tensor::randn({n, n}, 2);
  for (auto _ : state) {
    Tensor a({n, n}, std::vector<float>(n * n, 0.5f), true);
    sum(matmul(a, b)).backward();
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto x = Tensor::randn({8, 1, 28, 28}, 1);
  const auto w = Tensor::randn({32, 1, 5, 5}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, std::nullopt, 2, 2).values().data());
  }
}
BENCHMARK(BM_Conv2d);

void BM_ConvTranspose2d(benchmark::State& state) {
  const auto x = Tensor::randn({8, 32, 7, 7}, 1);
  const auto w = Tensor::randn({32, 32, 5, 5}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv_transpose2d(x, w, std::nullopt, 2, 2, 1).values().data());
  }
}
BENCHMARK(BM_ConvTranspose2d);

// One INCPVAE optimization step on the desk-scale MLP (14x14 input).
void BM_TrainStep(benchmark::State& state) {
  Architecture arch;
  arch.input = {1, 14, 14};
  auto params = ModelParams::init(arch, 1);
  AdamState adam = AdamState::for_params(params);
  std::vector<float> xv(64 * 196);
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = static_cast<float>(i % 17) / 16.0f;
  const Tensor x({64, 196}, xv);
  const Tensor eps = Tensor::randn({64, arch.latent}, 3);
  IncpConfig cfg;
  for (auto _ : state) {
    params.zero_grad();
    const auto loss = incpvae_loss(params, x, x, cfg, eps);
    loss.total.backward();
    adam_step(params, adam, AdamConfig{});
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> pos(n), neg(n);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = static_cast<double>((i * 7919) % n) + 0.5;
    neg[i] = static_cast<double>((i * 104729) % n);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auroc(pos, neg));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
