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

#include "ocean/attention.hpp"
#include "ocean/oracle.hpp"
#include "test_util.hpp"

namespace ocean {
namespace {

using testing::BitwiseEqual;
using testing::MaxAbs;
using testing::RandomInt;
using testing::RandomMat;
using testing::RandomReal;

TEST(KernelPhi, KnownValuesAndPositivity) {
  Mat x(1, 3);
  x << 0.0, 1.0, -1.0;
  const Mat y = KernelPhi(x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 2), std::exp(-1.0));
  std::mt19937_64 rng(1);
  EXPECT_GT(KernelPhi(RandomMat(50, 8, rng, 10.0)).minCoeff(), 0.0);
}

TEST(SgaCluster, SingleKeyReturnsItsValue) {
  std::mt19937_64 rng(2);
  const Mat q = RandomMat(5, 4, rng), k = RandomMat(1, 4, rng), v = RandomMat(1, 3, rng);
  const Mat out = SgaCluster(q, k, v);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_LT((out.row(i) - v.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SgaCluster, SingleKeyHasZeroQueryGradient) {
  std::mt19937_64 rng(3);
  const Mat q = RandomMat(3, 4, rng), k = RandomMat(1, 4, rng), v = RandomMat(1, 2, rng);
  const SgaGradients g = SgaClusterBackward(q, k, v, RandomMat(3, 2, rng));
  EXPECT_LT(MaxAbs(g.d_q), 1e-12);
  EXPECT_LT(MaxAbs(g.d_k), 1e-12);
}

TEST(SgaCluster, DuplicateKeysAverageValues) {
  std::mt19937_64 rng(4);
  const Mat q = RandomMat(3, 4, rng);
  Mat k(2, 4);
  k.row(0) = RandomMat(1, 4, rng);
  k.row(1) = k.row(0);
  const Mat v = RandomMat(2, 3, rng);
  const Mat out = SgaCluster(q, k, v);
  const RowVec mean = 0.5 * (v.row(0) + v.row(1));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LT((out.row(i) - mean).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SgaCluster, NoKeysReturnsQueries) {
  std::mt19937_64 rng(5);
  const Mat q = RandomMat(3, 4, rng);
  EXPECT_TRUE(BitwiseEqual(SgaCluster(q, Mat(0, 4), Mat(0, 4)), q));
}

TEST(SgaCluster, MatchesPairwiseOracle) {
  std::mt19937_64 rng(6);
  const Mat q = RandomMat(4, 4, rng), k = RandomMat(8, 4, rng), v = RandomMat(8, 4, rng);
  EXPECT_LT(MaxAbs(SgaCluster(q, k, v) - SgaPairwise(q, k, v)), 1e-12);
}

TEST(SgaCluster, OutputsInConvexHullOfValues) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const int n = RandomInt(rng, 1, 10);
    const Mat q = RandomMat(6, 3, rng, 2.0), k = RandomMat(n, 3, rng, 2.0), v = RandomMat(n, 2, rng);
    const Mat out = SgaCluster(q, k, v);
    for (Eigen::Index c = 0; c < 2; ++c) {
      EXPECT_LE(out.col(c).maxCoeff(), v.col(c).maxCoeff() + 1e-12);
      EXPECT_GE(out.col(c).minCoeff(), v.col(c).minCoeff() - 1e-12);
    }
  }
}

TEST(SgaCluster, RecordsPositiveDenominators) {
  std::mt19937_64 rng(8);
  std::vector<double> den;
  SgaCluster(RandomMat(4, 3, rng), RandomMat(5, 3, rng), RandomMat(5, 3, rng), &den);
  ASSERT_EQ(den.size(), 4u);
  for (double d : den) EXPECT_GT(d, 0.0);
}

TEST(DepthSimilarity, GathersPixelProbabilities) {
  const DepthBinning b{0.0, 4.0, 4};
  Mat dists(3, 4);
  dists << 0, 1, 0, 0,  //
      0, 0, 1, 0,       //
      0.25, 0.25, 0.25, 0.25;
  const std::vector<double> depths{1.5, 7.0};
  const Mat a = DepthSimilarity(depths, dists, b);
  ASSERT_EQ(a.rows(), 2);
  ASSERT_EQ(a.cols(), 3);
  EXPECT_EQ(a(0, 0), 1.0);   // same bin
  EXPECT_EQ(a(0, 1), 0.0);   // other bin
  EXPECT_EQ(a(0, 2), 0.25);  // uniform
  EXPECT_EQ(a(1, 0), 0.0);   // clamped into bin 3
  EXPECT_EQ(a(1, 2), 0.25);
}

TEST(Sga3dCluster, AllOnesReducesToSgaBitwise) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    const int m = RandomInt(rng, 1, 32), n = RandomInt(rng, 1, 32), c = RandomInt(rng, 1, 16);
    const Mat q = RandomMat(m, c, rng), k = RandomMat(n, c, rng), v = RandomMat(n, c, rng);
    EXPECT_TRUE(BitwiseEqual(Sga3dCluster(q, k, v, Mat::Ones(m, n)), SgaCluster(q, k, v)));
  }
}

TEST(Sga3dCluster, SingleKeyScalesValue) {
  std::mt19937_64 rng(10);
  const Mat q = RandomMat(3, 4, rng), k = RandomMat(1, 4, rng), v = RandomMat(1, 2, rng);
  Mat a(3, 1);
  a << 0.2, 0.5, 0.9;
  const Mat out = Sga3dCluster(q, k, v, a);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LT((out.row(i) - a(i, 0) * v.row(0)).cwiseAbs().maxCoeff(), 1e-15);
  // The weighted denominator cancels a single similarity entirely.
  const Mat weighted = Sga3dCluster(q, k, v, a, DenominatorMode::kWeighted);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LT((weighted.row(i) - v.row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sga3dCluster, MatchesPairwiseOracleInBothModes) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const int m = RandomInt(rng, 1, 10), n = RandomInt(rng, 1, 10), c = RandomInt(rng, 1, 6);
    const Mat q = RandomMat(m, c, rng), k = RandomMat(n, c, rng), v = RandomMat(n, c, rng);
    Mat a = RandomMat(m, n, rng).cwiseAbs();
    a = a.cwiseMin(1.0);
    for (DenominatorMode mode : {DenominatorMode::kUnweighted, DenominatorMode::kWeighted}) {
      EXPECT_LT(MaxAbs(Sga3dCluster(q, k, v, a, mode) - Sga3dPairwise(q, k, v, a, mode)), 1e-12);
    }
  }
}

TEST(Sga3dCluster, ZeroSimilarityRowUsesFloor) {
  std::mt19937_64 rng(12);
  const Mat q = RandomMat(2, 3, rng), k = RandomMat(4, 3, rng), v = RandomMat(4, 3, rng);
  const Mat a = Mat::Zero(2, 4);
  const Mat out = Sga3dCluster(q, k, v, a, DenominatorMode::kWeighted);
  EXPECT_TRUE(out.allFinite());
  EXPECT_EQ(MaxAbs(out), 0.0);
}

TEST(Sga3dCluster, RejectsSimilarityShapeMismatch) {
  const Mat q = Mat::Ones(2, 3), k = Mat::Ones(4, 3), v = Mat::Ones(4, 3);
  EXPECT_THROW(Sga3dCluster(q, k, v, Mat::Ones(4, 2)), ValidationError);
}

struct TwoClusterSetup {
  InstanceClustering clustering;
  std::vector<double> depths;
  DepthBinning binning{1.0, 5.0, 4};
  std::vector<ScaleAttentionInputs> scales;
  Mat queries;
};

TwoClusterSetup MakeTwoClusters(std::mt19937_64& rng) {
  TwoClusterSetup s;
  InstanceMask mask(4, 4);
  mask.ids = {1, 1, 2, 2, 1, 1, 2, 2, 0, 0, 2, 2, 0, 0, 0, 0};
  mask.RecountInstances();
  const std::vector<int> ids{1, 2, 0, 2, 1};
  const std::vector<InstanceMask> masks{mask};
  const std::vector<int> scale_list{1};
  s.clustering = BuildClusters(ids, masks, scale_list);
  s.depths = {1.2, 2.7, 3.3, 4.9, 2.0};
  s.scales.push_back({RandomMat(16, 3, rng), RandomMat(16, 3, rng), SoftmaxRows(RandomMat(16, 4, rng))});
  s.queries = RandomMat(5, 3, rng);
  return s;
}

TEST(RunSga3d, ZeroProposalsIsNoOp) {
  std::mt19937_64 rng(13);
  TwoClusterSetup s = MakeTwoClusters(rng);
  InstanceMask mask(4, 4);
  const std::vector<InstanceMask> masks{mask};
  const std::vector<int> scale_list{1};
  const InstanceClustering empty = BuildClusters(std::vector<int>{}, masks, scale_list);
  const Mat out = RunSga3d(empty, Mat(0, 3), std::vector<double>{}, s.scales, s.binning);
  EXPECT_EQ(out.rows(), 0);
}

TEST(RunSga3d, SingleClusterUnitSimilarityEqualsSga) {
  std::mt19937_64 rng(14);
  InstanceMask mask(2, 2);
  std::fill(mask.ids.begin(), mask.ids.end(), 1);
  mask.RecountInstances();
  const std::vector<InstanceMask> masks{mask};
  const std::vector<int> scale_list{1};
  const InstanceClustering c = BuildClusters(std::vector<int>{1, 1, 1}, masks, scale_list);
  const DepthBinning binning{0.0, 1.0, 1};
  const std::vector<ScaleAttentionInputs> scales{{RandomMat(4, 3, rng), RandomMat(4, 3, rng), Mat::Ones(4, 1)}};
  const Mat q = RandomMat(3, 3, rng);
  const Mat out = RunSga3d(c, q, std::vector<double>{0.1, 0.5, 0.9}, scales, binning);
  EXPECT_TRUE(BitwiseEqual(out, SgaCluster(q, scales[0].keys, scales[0].values)));
}

TEST(RunSga3d, ExcludedProposalsGetZeroResidual) {
  std::mt19937_64 rng(15);
  const TwoClusterSetup s = MakeTwoClusters(rng);
  const Mat out = RunSga3d(s.clustering, s.queries, s.depths, s.scales, s.binning);
  EXPECT_EQ(out.row(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(out.row(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RunSga3d, InvariantToClusterOrder) {
  std::mt19937_64 rng(16);
  const TwoClusterSetup s = MakeTwoClusters(rng);
  InstanceClustering reversed = s.clustering;
  std::reverse(reversed.clusters.begin(), reversed.clusters.end());
  const Mat a = RunSga3d(s.clustering, s.queries, s.depths, s.scales, s.binning);
  const Mat b = RunSga3d(reversed, s.queries, s.depths, s.scales, s.binning);
  EXPECT_TRUE(BitwiseEqual(a, b));
}

TEST(RunSga3d, MatchesPerClusterComposition) {
  std::mt19937_64 rng(17);
  const TwoClusterSetup s = MakeTwoClusters(rng);
  std::vector<std::vector<double>> dens;
  const Mat out = RunSga3d(s.clustering, s.queries, s.depths, s.scales, s.binning,
                           {DenominatorMode::kUnweighted, &dens});
  EXPECT_EQ(dens.size(), 2u);
  for (const Cluster& c : s.clustering.clusters) {
    Mat q(static_cast<Eigen::Index>(c.proposals.size()), 3), k(static_cast<Eigen::Index>(c.pixels[0].size()), 3),
        v(k.rows(), 3), d(k.rows(), 4);
    std::vector<double> depth;
    for (std::size_t i = 0; i < c.proposals.size(); ++i) {
      q.row(static_cast<Eigen::Index>(i)) = s.queries.row(c.proposals[i]);
      depth.push_back(s.depths[static_cast<std::size_t>(c.proposals[i])]);
    }
    for (std::size_t p = 0; p < c.pixels[0].size(); ++p) {
      k.row(static_cast<Eigen::Index>(p)) = s.scales[0].keys.row(c.pixels[0][p]);
      v.row(static_cast<Eigen::Index>(p)) = s.scales[0].values.row(c.pixels[0][p]);
      d.row(static_cast<Eigen::Index>(p)) = s.scales[0].depth_dist.row(c.pixels[0][p]);
    }
    const Mat expected = Sga3dPairwise(q, k, v, DepthSimilarity(depth, d, s.binning), DenominatorMode::kUnweighted);
    for (std::size_t i = 0; i < c.proposals.size(); ++i) {
      EXPECT_LT((out.row(c.proposals[i]) - expected.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

FeatureMap MapOf(int h, int w, const Mat& data) {
  FeatureMap m(h, w, static_cast<int>(data.cols()));
  m.data = data;
  return m;
}

TEST(BilinearSample, IntegerMidpointAndClamp) {
  Mat d(6, 1);
  d << 0, 1, 2, 10, 11, 12;
  const FeatureMap m = MapOf(2, 3, d);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(2, 1))(0), 12.0);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(0.5, 0))(0), 0.5);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(1, 0.5))(0), 6.0);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(-3, -3))(0), 0.0);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(9, 0.5))(0), 7.0);
  EXPECT_DOUBLE_EQ(BilinearSample(m, Vec2(1.25, 7))(0), BilinearSample(m, Vec2(1.25, 1))(0));
}

TEST(BilinearSample, RejectsNonFinitePosition) {
  const FeatureMap m = MapOf(2, 2, Mat::Ones(4, 1));
  EXPECT_THROW(BilinearSample(m, Vec2(std::nan(""), 0)), NumericalError);
}

GsgaParams RandomGsga(int c, int ci, int cs, int k, std::mt19937_64& rng) {
  GsgaParams p;
  p.projection = RandomMat(c, ci, rng);
  p.offsets = Linear(c, 2 * k);
  p.offsets.weight = RandomMat(2 * k, c, rng, 0.5);
  p.offsets.bias = RandomMat(1, 2 * k, rng, 0.5);
  p.weights = Linear(c, k);
  p.weights.weight = RandomMat(k, c, rng);
  p.weights.bias = RandomMat(1, k, rng);
  p.gate = RandomMat(c, cs, rng);
  p.gate_bias = Mat::Constant(1, 1, 2.0);
  return p;
}

TEST(Gsga, SinglePointDegenerateCase) {
  std::mt19937_64 rng(18);
  const int c = 3;
  GsgaParams p = RandomGsga(c, c, 2, 1, rng);
  p.offsets.weight.setZero();
  p.offsets.bias.setZero();
  p.gate_bypass = true;
  const FeatureMap image = MapOf(4, 5, RandomMat(20, c, rng));
  const FeatureMap sam = MapOf(4, 5, RandomMat(20, 2, rng));
  const Mat q = RandomMat(2, c, rng);
  const std::vector<Vec2> pos{{1.0, 2.0}, {3.5, 0.25}};
  const Mat out = Gsga(q, pos, image, sam, p);
  for (int i = 0; i < 2; ++i) {
    const RowVec expected = BilinearSample(image, pos[static_cast<std::size_t>(i)]) * p.projection.transpose();
    EXPECT_LT((out.row(i) - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Gsga, ClosedGateGivesZero) {
  std::mt19937_64 rng(19);
  GsgaParams p = RandomGsga(4, 4, 3, 3, rng);
  p.gate.setZero();
  p.gate_bias(0, 0) = -1e4;
  const FeatureMap image = MapOf(3, 3, RandomMat(9, 4, rng));
  const FeatureMap sam = MapOf(3, 3, RandomMat(9, 3, rng));
  const std::vector<Vec2> pos{{1.0, 1.0}};
  EXPECT_EQ(MaxAbs(Gsga(RandomMat(1, 4, rng), pos, image, sam, p)), 0.0);
}

TEST(Gsga, BypassIgnoresSamFeatures) {
  std::mt19937_64 rng(20);
  GsgaParams p = RandomGsga(4, 4, 3, 3, rng);
  p.gate_bypass = true;
  const FeatureMap image = MapOf(3, 4, RandomMat(12, 4, rng));
  const Mat q = RandomMat(3, 4, rng);
  const std::vector<Vec2> pos{{0.5, 0.5}, {2.0, 1.5}, {3.0, 0.0}};
  const Mat a = Gsga(q, pos, image, MapOf(3, 4, RandomMat(12, 3, rng)), p);
  const Mat b = Gsga(q, pos, image, MapOf(3, 4, RandomMat(12, 3, rng)), p);
  EXPECT_TRUE(BitwiseEqual(a, b));
}

TEST(Gsga, MatchesDenseOracle) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const int c = RandomInt(rng, 1, 6), ci = RandomInt(rng, 1, 4), cs = RandomInt(rng, 1, 4);
    const int k = RandomInt(rng, 1, 4), h = RandomInt(rng, 2, 6), w = RandomInt(rng, 2, 6);
    GsgaParams p = RandomGsga(c, ci, cs, k, rng);
    p.gate_bypass = t % 4 == 0;
    const FeatureMap image = MapOf(h, w, RandomMat(h * w, ci, rng));
    const FeatureMap sam = MapOf(h, w, RandomMat(h * w, cs, rng));
    const int n = RandomInt(rng, 1, 5);
    std::vector<Vec2> pos;
    for (int i = 0; i < n; ++i) pos.emplace_back(RandomReal(rng, -1, w), RandomReal(rng, -1, h));
    const Mat q = RandomMat(n, c, rng);
    EXPECT_LT(MaxAbs(Gsga(q, pos, image, sam, p) - GsgaDense(q, pos, image, sam, p)), 1e-12);
  }
}

BevMap BevOf(int nx, int ny, const Mat& data) {
  BevMap m(nx, ny, static_cast<int>(data.cols()));
  m.data = data;
  return m;
}

TEST(WindowAttention, UnitWindowCopiesValues) {
  std::mt19937_64 rng(22);
  const BevMap q = BevOf(3, 2, RandomMat(6, 4, rng)), kv = BevOf(3, 2, RandomMat(6, 4, rng));
  EXPECT_LT(MaxAbs(WindowAttention(q, kv, 1).data - kv.data), 1e-15);
}

TEST(WindowAttention, IdenticalKeysGiveWindowMean) {
  std::mt19937_64 rng(23);
  const BevMap q = BevOf(4, 4, RandomMat(16, 3, rng));
  const BevMap kv = BevOf(4, 4, Mat::Constant(16, 3, 0.7));
  const BevMap out = WindowAttention(q, kv, 2);
  EXPECT_LT(MaxAbs(out.data.array() - 0.7), 1e-15);
}

TEST(WindowAttention, MatchesMaskedDenseOracle) {
  std::mt19937_64 rng(24);
  const BevMap q = BevOf(8, 8, RandomMat(64, 5, rng)), kv = BevOf(8, 8, RandomMat(64, 5, rng));
  EXPECT_LT(MaxAbs(WindowAttention(q, kv, 4).data - WindowAttentionDense(q, kv, 4).data), 1e-12);
}

TEST(WindowAttention, NoCrossWindowInteraction) {
  std::mt19937_64 rng(25);
  const BevMap q = BevOf(4, 4, RandomMat(16, 2, rng));
  BevMap kv = BevOf(4, 4, RandomMat(16, 2, rng));
  const BevMap a = WindowAttention(q, kv, 2);
  kv.data.row(kv.index(3, 3)) *= 5.0;  // window (1, 1)
  const BevMap b = WindowAttention(q, kv, 2);
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      const bool touched = x >= 2 && y >= 2;
      const bool same = a.data.row(a.index(x, y)) == b.data.row(b.index(x, y));
      EXPECT_EQ(same, !touched) << x << "," << y;
    }
  }
}

TEST(WindowAttention, EquivariantToWindowPermutation) {
  std::mt19937_64 rng(26);
  const BevMap q = BevOf(4, 2, RandomMat(8, 3, rng)), kv = BevOf(4, 2, RandomMat(8, 3, rng));
  // Swap the two 2 x 2 windows along x.
  auto swap = [](const BevMap& m) {
    BevMap out = m;
    for (int x = 0; x < 4; ++x) {
      for (int y = 0; y < 2; ++y) out.data.row(out.index((x + 2) % 4, y)) = m.data.row(m.index(x, y));
    }
    return out;
  };
  EXPECT_TRUE(BitwiseEqual(WindowAttention(swap(q), swap(kv), 2).data, swap(WindowAttention(q, kv, 2)).data));
}

TEST(WindowAttention, RejectsNonDivisibleDims) {
  const BevMap q(6, 4, 2), kv(6, 4, 2);
  EXPECT_THROW(WindowAttention(q, kv, 4), ValidationError);
}

}  // namespace
}  // namespace ocean
