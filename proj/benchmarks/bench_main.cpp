#include <benchmark/benchmark.h>

#include <vector>

#include "flythrough/config.hpp"
#include "flythrough/geometry.hpp"
#include "flythrough/synthdata.hpp"
#include "flythrough/training.hpp"

using namespace flythrough;

namespace {

void BM_WarpRgbd(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  const RgbdImage img = make_terrain_sample(1, 0, res, 55.0, 55.0).image;
  const Intrinsics K = intrinsics_from_fov(55.0, res, res);
  const CameraPose dst = CameraPose::look({0.05, -0.02, 0.1875}, 0.02, -0.01);
  for (auto _ : state) benchmark::DoNotOptimize(warp_rgbd(img, CameraPose{}, dst, K));
  state.SetItemsProcessed(state.iterations() * res * res);
}
BENCHMARK(BM_WarpRgbd)->Arg(32)->Arg(64)->Arg(128);

void BM_DenoiserForward(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  DenoiserModel model(Config{}.unet());
  Rng rng(2, "bench");
  model.init(rng);
  Tensor<float> x(4, res, res, 0.5f), m(1, res, res), y(4, res, res, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(model.apply(x, m, y, 100, true));
}
BENCHMARK(BM_DenoiserForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  const Config config;
  std::vector<RgbdImage> dataset;
  for (std::uint64_t i = 0; i < 8; ++i)
    dataset.push_back(make_terrain_sample(3, i, config.resolution, kTrainFovLo, kTrainFovHi).image);
  DenoiserModel model(config.unet());
  model.meta.timesteps = config.t_steps;
  Rng init(4, "bench");
  model.init(init);
  AdamState optimizer;
  optimizer.reset(model.net().parameters());
  const PairSampler sampler = config.pair_sampler();
  Rng pair_rng(5, "bench-pairs");
  std::vector<TrainingPair> batch;
  for (int b = 0; b < config.batch; ++b) batch.push_back(sampler(dataset, pair_rng));
  const NoiseSchedule schedule = config.schedule();
  Rng rng(6, "bench-noise");
  for (auto _ : state)
    benchmark::DoNotOptimize(
        training_step(model, batch, schedule, optimizer, config.optimizer(), config.guidance(), rng));
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_PseudoPair(benchmark::State& state) {
  const Config config;
  const std::vector<RgbdImage> dataset{make_terrain_sample(7, 0, config.resolution, 55.0, 55.0).image};
  const PairSampler sampler = config.pair_sampler();
  Rng rng(8, "bench-pair");
  for (auto _ : state) benchmark::DoNotOptimize(sampler(dataset, rng));
}
BENCHMARK(BM_PseudoPair);

}  // namespace

BENCHMARK_MAIN();
