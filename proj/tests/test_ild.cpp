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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ocean/ild.hpp"
#include "ocean/rng.hpp"
#include "test_util.hpp"

namespace ocean {
namespace {

using testing::BitwiseEqual;
using testing::MaxAbs;
using testing::RandomInt;
using testing::RandomMat;

BevMap BevOf(int nx, int ny, const Mat& data) {
  BevMap m(nx, ny, static_cast<int>(data.cols()));
  m.data = data;
  return m;
}

TEST(PoolInstanceFeatures, PlainSumAndAcrossScales) {
  InstanceMask full(4, 4);
  full.ids = {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  full.RecountInstances();
  const std::vector<int> scales{1, 2};
  const std::vector<InstanceMask> masks{full, DownsampleMask(full, 2)};
  const InstanceClustering c = BuildClusters(std::vector<int>{}, masks, scales);
  Mat s1 = Mat::Zero(16, 2), s2 = Mat::Zero(4, 2);
  s1.row(0) << 1, 2;
  s1.row(1) << 3, 4;
  s1.row(4) << 10, 0;
  s1.row(5) << 0, 10;
  s2.row(0) << 100, 200;
  const std::vector<Mat> feats{s1, s2};
  const InstanceFeatureSet pooled = PoolInstanceFeatures(c, feats);
  ASSERT_EQ(pooled.ids, (std::vector<int>{1}));
  EXPECT_EQ(pooled.features(0, 0), 1 + 3 + 10 + 100);
  EXPECT_EQ(pooled.features(0, 1), 2 + 4 + 10 + 200);
}

TEST(PoolInstanceFeatures, MatchesGroupBySumOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 30; ++t) {
    InstanceMask full(8, 8);
    for (int& id : full.ids) id = RandomInt(rng, 0, 3);
    std::vector<int> present(4, 0);
    for (int id : full.ids) present[static_cast<std::size_t>(id)] = 1;
    std::vector<int> remap(4, 0);
    for (int id = 1, next = 0; id <= 3; ++id) {
      if (present[static_cast<std::size_t>(id)]) remap[static_cast<std::size_t>(id)] = ++next;
    }
    for (int& id : full.ids) id = remap[static_cast<std::size_t>(id)];
    full.RecountInstances();
    const std::vector<int> scales{2, 4};
    const std::vector<InstanceMask> masks{DownsampleMask(full, 2), DownsampleMask(full, 4)};
    const InstanceClustering c = BuildClusters(std::vector<int>{}, masks, scales);
    const std::vector<Mat> feats{RandomMat(16, 3, rng), RandomMat(4, 3, rng)};
    const InstanceFeatureSet pooled = PoolInstanceFeatures(c, feats);
    for (std::size_t l = 0; l < pooled.ids.size(); ++l) {
      RowVec expected = RowVec::Zero(3);
      for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t p = 0; p < masks[s].ids.size(); ++p) {
          if (masks[s].ids[p] == pooled.ids[l]) expected += feats[s].row(static_cast<Eigen::Index>(p));
        }
      }
      EXPECT_LT((pooled.features.row(static_cast<Eigen::Index>(l)) - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(PlanDecoder, LayerScheduleAndErrors) {
  EXPECT_EQ(PlanDecoder(16, 16).num_layers, 2);
  EXPECT_EQ(PlanDecoder(32, 32).num_layers, 3);
  EXPECT_EQ(PlanDecoder(64, 64).num_layers, 4);
  EXPECT_EQ(PlanDecoder(4, 8).seed_y, 8);
  EXPECT_THROW(PlanDecoder(24, 24), ValidationError);
  EXPECT_THROW(PlanDecoder(16, 6), ValidationError);
}

TEST(DecodeInstanceBev, ZeroParamsGiveZeroOutput) {
  const DecoderParams d = MakeDecoder(4, 16, 16);
  std::mt19937_64 rng(2);
  const DecodedBev out = DecodeInstanceBev(RandomMat(1, 4, rng), d);
  EXPECT_EQ(out.map.nx, 16);
  EXPECT_EQ(out.map.ny, 16);
  EXPECT_EQ(out.map.channels(), 4);
  EXPECT_EQ(MaxAbs(out.map.data), 0.0);
  EXPECT_EQ(out.alpha, 0.0);
}

TEST(DecodeInstanceBev, OutputDimsFollowGrid) {
  std::mt19937_64 rng(3);
  for (int nx : {4, 8, 16, 32}) {
    DecoderParams d = MakeDecoder(3, nx, 8);
    d.seed.weight = RandomMat(d.seed.weight.rows(), d.seed.weight.cols(), rng);
    for (auto& l : d.layers) l.weight = RandomMat(l.weight.rows(), l.weight.cols(), rng);
    const DecodedBev out = DecodeInstanceBev(RandomMat(1, 3, rng), d);
    EXPECT_EQ(out.map.nx, nx);
    EXPECT_EQ(out.map.ny, 8);
    EXPECT_TRUE(std::isfinite(out.alpha));
  }
}

TEST(GumbelDecision, DominantLogitAndTieRule) {
  Mat logits(2, 2);
  logits << 10, -10, 0.3, 0.3;
  const DecisionVector d = GumbelDecision(logits, Mat::Zero(2, 2), 1.0);
  EXPECT_EQ(d.z, (std::vector<double>{1.0, 1.0}));
  Mat drop(1, 2);
  drop << -10, 10;
  EXPECT_EQ(GumbelDecision(drop, Mat::Zero(1, 2), 1.0).z, (std::vector<double>{0.0}));
}

TEST(GumbelDecision, StraightThroughGradientFlows) {
  Mat logits(3, 2);
  logits << 0.5, -0.2, -1.0, 1.0, 2.0, 0.0;
  const DecisionVector d = GumbelDecision(logits, Mat::Zero(3, 2), 1.0);
  for (double z : d.z) EXPECT_TRUE(z == 0.0 || z == 1.0);
  const Mat g = GumbelDecisionBackward(d, std::vector<double>{1.0, 1.0, 1.0});
  EXPECT_GT(MaxAbs(g), 0.0);
  for (Eigen::Index l = 0; l < 3; ++l) {
    const double p = d.soft(l, 0);
    EXPECT_NEAR(g(l, 0), p * (1 - p), 1e-15);
    EXPECT_NEAR(g(l, 1), -p * (1 - p), 1e-15);
  }
}

TEST(GumbelDecision, SelectionFrequencyMatchesSigmoidOfGap) {
  std::mt19937_64 rng = MakeStream(7, 1);
  const int draws = 10000;
  Mat logits(1, 2);
  logits << 2.5, -2.5;
  int selected = 0;
  for (int i = 0; i < draws; ++i) selected += GumbelDecision(logits, 1.0, rng).z[0] == 1.0;
  const double p = 1.0 / (1.0 + std::exp(-5.0));
  const double se = std::sqrt(p * (1 - p) / draws);
  EXPECT_LT(std::abs(selected / static_cast<double>(draws) - p), 3 * se);
}

TEST(GumbelDecision, NoiseStreamIsDeterministic) {
  std::mt19937_64 a = MakeStream(3, 9), b = MakeStream(3, 9);
  EXPECT_TRUE(BitwiseEqual(SampleGumbelNoise(5, a), SampleGumbelNoise(5, b)));
}

struct CombineSetup {
  std::vector<BevMap> maps;
  Vec alpha;
};

CombineSetup RandomCombine(int l, std::mt19937_64& rng) {
  CombineSetup s;
  for (int i = 0; i < l; ++i) s.maps.push_back(BevOf(2, 3, RandomMat(6, 2, rng)));
  s.alpha = RandomMat(l, 1, rng);
  return s;
}

TEST(CombineBev, FullSelection) {
  std::mt19937_64 rng(4);
  const CombineSetup s = RandomCombine(3, rng);
  const CombinedBev c = CombineBev(s.maps, s.alpha, std::vector<double>{1, 1, 1});
  const Vec w = (s.alpha.array() - s.alpha.maxCoeff()).exp() / (s.alpha.array() - s.alpha.maxCoeff()).exp().sum();
  Mat expected = Mat::Zero(6, 2);
  for (int l = 0; l < 3; ++l) {
    EXPECT_NEAR(c.normalized(l), w(l) / (1 + kSelectionEpsilon), 1e-15);
    expected += w(l) * s.maps[static_cast<std::size_t>(l)].data;
  }
  EXPECT_LT(MaxAbs(c.combined.data - expected), 2 * kSelectionEpsilon * MaxAbs(expected));
}

TEST(CombineBev, SingleSelection) {
  std::mt19937_64 rng(5);
  const CombineSetup s = RandomCombine(3, rng);
  const CombinedBev c = CombineBev(s.maps, s.alpha, std::vector<double>{0, 1, 0});
  const double w1 = c.weights(1);
  EXPECT_DOUBLE_EQ(c.normalized(1), w1 / (w1 + kSelectionEpsilon));
  EXPECT_LT(MaxAbs(c.combined.data - s.maps[1].data), kSelectionEpsilon / w1 * MaxAbs(s.maps[1].data));
}

TEST(CombineBev, NoSelectionIsExactlyZero) {
  std::mt19937_64 rng(6);
  const CombineSetup s = RandomCombine(3, rng);
  const CombinedBev c = CombineBev(s.maps, s.alpha, std::vector<double>{0, 0, 0});
  EXPECT_EQ(MaxAbs(c.combined.data), 0.0);
}

TEST(CombineBev, WeightSumGapIsEpsilon) {
  std::mt19937_64 rng(7);
  const CombineSetup s = RandomCombine(4, rng);
  const std::vector<double> z{1, 0, 1, 1};
  const CombinedBev c = CombineBev(s.maps, s.alpha, z);
  double zw = 0.0;
  for (int l = 0; l < 4; ++l) zw += z[static_cast<std::size_t>(l)] * c.weights(l);
  EXPECT_NEAR(1.0 - c.normalized.sum(), kSelectionEpsilon / (zw + kSelectionEpsilon), 1e-15);
}

TEST(CombineBev, PermutationEquivariant) {
  std::mt19937_64 rng(8);
  const CombineSetup s = RandomCombine(3, rng);
  const std::vector<double> z{1, 0, 1};
  const CombinedBev a = CombineBev(s.maps, s.alpha, z);
  const std::vector<BevMap> maps{s.maps[2], s.maps[0], s.maps[1]};
  Vec alpha(3);
  alpha << s.alpha(2), s.alpha(0), s.alpha(1);
  const CombinedBev b = CombineBev(maps, alpha, std::vector<double>{1, 1, 0});
  EXPECT_LT(MaxAbs(a.combined.data - b.combined.data), 1e-14);
}

TEST(CombineBev, AlphaShiftInvariance) {
  std::mt19937_64 rng(9);
  const CombineSetup s = RandomCombine(3, rng);
  const std::vector<double> z{1, 1, 0};
  const CombinedBev a = CombineBev(s.maps, s.alpha, z);
  const CombinedBev b = CombineBev(s.maps, (s.alpha.array() + 7.5).matrix(), z);
  EXPECT_LT(MaxAbs(a.combined.data - b.combined.data), 1e-14);
}

TEST(ReconstructionLoss, AnalyticCases) {
  std::mt19937_64 rng(10);
  const BevMap f = BevOf(2, 2, RandomMat(4, 3, rng));
  EXPECT_EQ(ReconstructionLoss(f, f), 0.0);
  BevMap target(2, 2, 3);
  target.data(0, 0) = target.data(1, 2) = target.data(3, 1) = 2.0;
  EXPECT_EQ(ReconstructionLoss(BevMap(2, 2, 3), target), 12.0);
  EXPECT_THROW(ReconstructionLoss(BevMap(2, 2, 3), BevMap(2, 1, 3)), ValidationError);
}

TEST(ReconstructionLoss, MatchesElementLoop) {
  std::mt19937_64 rng(11);
  const BevMap a = BevOf(4, 4, RandomMat(16, 5, rng)), b = BevOf(4, 4, RandomMat(16, 5, rng));
  double expected = 0.0;
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      for (int c = 0; c < 5; ++c) {
        const double d = a.data(a.index(x, y), c) - b.data(b.index(x, y), c);
        expected += d * d;
      }
    }
  }
  EXPECT_NEAR(ReconstructionLoss(a, b), expected, 1e-9);
  const Mat g = ReconstructionLossBackward(a, b, 0.5);
  EXPECT_LT(MaxAbs(g - (a.data - b.data)), 1e-15);
}

RefineParams IdentityRefine(int c, int nz) {
  RefineParams p;
  p.input_proj = Mat::Zero(c, nz * c);
  for (int z = 0; z < nz; ++z) p.input_proj.block(0, z * c, c, c) = Mat::Identity(c, c);
  p.value = Linear(c, c);
  p.value.weight = Mat::Identity(c, c);
  p.output_proj = Mat::Zero(nz * c, c);
  p.window = 2;
  return p;
}

TEST(RefineScene, ZeroInstanceBevIsPureResidual) {
  std::mt19937_64 rng(12);
  const GridSpec grid{{4, 4, 2}, Vec3::Zero(), 1.0};
  VoxelVolume v(grid, 3);
  v.data = RandomMat(grid.num_voxels(), 3, rng);
  RefineParams p = IdentityRefine(3, 2);
  p.output_proj = RandomMat(6, 3, rng);
  const VoxelVolume out = RefineScene(v, BevMap(4, 4, 3), p);
  EXPECT_TRUE(BitwiseEqual(out.data, v.data));
}

TEST(RefineScene, UniformInstanceBevAddsExpandedValue) {
  std::mt19937_64 rng(13);
  const GridSpec grid{{2, 2, 2}, Vec3::Zero(), 1.0};
  VoxelVolume v(grid, 2);
  v.data = RandomMat(grid.num_voxels(), 2, rng);
  RefineParams p = IdentityRefine(2, 2);
  p.output_proj = Mat::Zero(4, 2);
  p.output_proj.block(0, 0, 2, 2) = Mat::Identity(2, 2);
  p.output_proj.block(2, 0, 2, 2) = Mat::Identity(2, 2);
  const BevMap bev = BevOf(2, 2, Mat::Constant(4, 2, 0.25));
  const VoxelVolume out = RefineScene(v, bev, p);
  EXPECT_LT(MaxAbs(out.data - (v.data.array() + 0.25).matrix()), 1e-15);
}

TEST(RefineScene, ShapeContract) {
  std::mt19937_64 rng(14);
  const GridSpec grid{{4, 2, 3}, Vec3::Zero(), 1.0};
  VoxelVolume v(grid, 2);
  v.data = RandomMat(grid.num_voxels(), 2, rng);
  RefineParams p = IdentityRefine(2, 3);
  p.output_proj = RandomMat(6, 2, rng);
  const VoxelVolume out = RefineScene(v, BevOf(4, 2, RandomMat(8, 2, rng)), p);
  EXPECT_EQ(out.data.rows(), v.data.rows());
  EXPECT_EQ(out.data.cols(), v.data.cols());
  EXPECT_THROW(RefineScene(v, BevOf(2, 2, RandomMat(4, 2, rng)), p), ValidationError);
}

TEST(FlattenColumns, ConcatenatesZCells) {
  const GridSpec grid{{1, 2, 2}, Vec3::Zero(), 1.0};
  VoxelVolume v(grid, 2);
  v.data << 1, 2, 3, 4, 5, 6, 7, 8;
  const Mat f = FlattenColumns(v);
  ASSERT_EQ(f.rows(), 2);
  EXPECT_EQ(f.row(0), (RowVec(4) << 1, 2, 3, 4).finished());
  EXPECT_EQ(f.row(1), (RowVec(4) << 5, 6, 7, 8).finished());
}

}  // namespace
}  // namespace ocean
