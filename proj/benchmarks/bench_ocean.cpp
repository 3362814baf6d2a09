/* Copyright 2026 The Ocean Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ocean/attention.hpp"
#include "ocean/harness.hpp"
#include "ocean/pipeline.hpp"
#include "ocean/rng.hpp"

namespace {

using namespace ocean;

Mat Randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void BM_SgaCluster(benchmark::State& state) {
  std::mt19937_64 rng = MakeStream(1, 0);
  const int n = static_cast<int>(state.range(0)), c = 16;
  const Mat q = Randn(n, c, rng), k = Randn(n, c, rng), v = Randn(n, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(SgaCluster(q, k, v));
  state.SetComplexityN(n);
}
BENCHMARK(BM_SgaCluster)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_Sga3dCluster(benchmark::State& state) {
  std::mt19937_64 rng = MakeStream(2, 0);
  const int n = static_cast<int>(state.range(0)), c = 16;
  const Mat q = Randn(n, c, rng), k = Randn(n, c, rng), v = Randn(n, c, rng);
  const Mat a = Randn(n, n, rng).cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(Sga3dCluster(q, k, v, a));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Sga3dCluster)->RangeMultiplier(4)->Range(16, 1024)->Complexity();

void BM_Gsga(benchmark::State& state) {
  std::mt19937_64 rng = MakeStream(3, 0);
  const int n = static_cast<int>(state.range(0)), c = 16, k = 4, h = 8, w = 8;
  GsgaParams p;
  p.projection = Randn(c, c, rng);
  p.offsets = Linear(c, 2 * k);
  p.offsets.weight = Randn(2 * k, c, rng, 0.5);
  p.weights = Linear(c, k);
  p.weights.weight = Randn(k, c, rng);
  p.gate = Randn(c, 8, rng);
  p.gate_bias = Mat::Zero(1, 1);
  std::uniform_real_distribution<double> u(0.0, w - 1.0);
  std::vector<Vec2> positions(static_cast<std::size_t>(n));
  for (auto& pos : positions) pos = Vec2(u(rng), u(rng));
  FeatureMap image(h, w, c), sam(h, w, 8);
  image.data = Randn(h * w, c, rng);
  sam.data = Randn(h * w, 8, rng);
  const Mat q = Randn(n, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(Gsga(q, positions, image, sam, p));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Gsga)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_WindowAttention(benchmark::State& state) {
  std::mt19937_64 rng = MakeStream(4, 0);
  const int side = static_cast<int>(state.range(0)), c = 16;
  BevMap query(side, side, c), kv(side, side, c);
  query.data = Randn(side * side, c, rng);
  kv.data = Randn(side * side, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(WindowAttention(query, kv, 4));
  state.SetComplexityN(side * side);
}
BENCHMARK(BM_WindowAttention)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_ForwardDesk(benchmark::State& state) {
  const HarnessConfig h;
  const ModelConfig config = h.model_config();
  const SceneFixture fixture = GenerateScene(h, 0).fixture;
  const ModelParams params = InitParams(config, 0);
  for (auto _ : state) benchmark::DoNotOptimize(Forward(config, fixture, params).losses.total);
}
BENCHMARK(BM_ForwardDesk)->Unit(benchmark::kMillisecond);

void BM_ForwardBackwardDesk(benchmark::State& state) {
  const HarnessConfig h;
  const ModelConfig config = h.model_config();
  const SceneFixture fixture = GenerateScene(h, 0).fixture;
  const ModelParams params = InitParams(config, 0);
  for (auto _ : state) {
    const ForwardResult f = Forward(config, fixture, params);
    benchmark::DoNotOptimize(Backward(config, fixture, params, f, LossGradients::OfTotal(config.loss_weights)));
  }
}
BENCHMARK(BM_ForwardBackwardDesk)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
