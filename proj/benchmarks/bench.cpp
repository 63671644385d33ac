#include <benchmark/benchmark.h>

#include "hagan/ablation.hpp"
#include "hagan/evaluation.hpp"
#include "hagan/masks_mixing.hpp"
#include "hagan/training.hpp"

using namespace hagan;

namespace {

TrainConfig bench_config(std::int64_t resolution) {
  auto c = desk_config(resolution);
  c.batch_size = 32;
  return c;
}

void BM_Generate(benchmark::State& state) {
  torch::NoGradGuard guard;
  const auto c = bench_config(state.range(0));
  Trainer t(c);
  auto z = t.grid_latent();
  for (auto _ : state) benchmark::DoNotOptimize(t.sample(z, true));
  state.SetItemsProcessed(state.iterations() * z.size(0));
}
BENCHMARK(BM_Generate)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Discriminate(benchmark::State& state) {
  torch::NoGradGuard guard;
  const auto c = bench_config(state.range(0));
  Trainer t(c);
  auto x = torch::rand({c.batch_size, 1, c.resolution, c.resolution}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(discriminate(t.discriminator(), x, {true, true}));
  state.SetItemsProcessed(state.iterations() * c.batch_size);
}
BENCHMARK(BM_Discriminate)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto c = bench_config(16);
  Trainer t(c);
  const auto phase = state.range(0) ? Phase::Augmented : Phase::Warmup;
  auto batch = data::phantom_dataset(c.batch_size, c.resolution, 0).images();
  for (auto _ : state) benchmark::DoNotOptimize(t.train_step(batch, phase, 0));
}
BENCHMARK(BM_TrainStep)->ArgName("augmented")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  const auto d = state.range(0);
  auto a = eval::compute_stats(torch::randn({2 * d, d}, torch::kFloat64));
  auto b = eval::compute_stats(torch::randn({2 * d, d}, torch::kFloat64) + 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(eval::frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Compose(benchmark::State& state) {
  const auto r = state.range(0);
  Rng rng(0);
  auto real = torch::rand({32, 1, r, r});
  auto fake = torch::rand({32, 1, r, r});
  auto mask = mix::sample_cut_mask(32, r, r, {}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mix::attnmix_compose(real, fake, mask));
}
BENCHMARK(BM_Compose)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
