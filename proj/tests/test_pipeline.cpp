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

#include <set>
#include <string>

#include "ocean/harness.hpp"
#include "ocean/pipeline.hpp"
#include "test_util.hpp"

namespace ocean {
namespace {

using testing::BitwiseEqual;
using testing::MaxAbs;

struct SmallScene {
  HarnessConfig harness = testing::SmallConfig();
  ModelConfig config = harness.model_config();
  SceneFixture fixture = GenerateScene(harness, 4).fixture;
};

// Parameters upstream of the selection logits only see the straight-through
// surrogate under hard decisions, so they are probed with relaxed ones.
bool FeedsDecision(const std::string& top) { return top == "decision." || top == "pixel_proj."; }

std::vector<std::string> TopLevelPrefixes(const ModelParams& params, bool decision) {
  std::set<std::string> names;
  params.ForEach([&](const std::string& name, const Mat&) {
    const auto dot = name.find('.');
    names.insert(dot == std::string::npos ? name : name.substr(0, dot + 1));
  });
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (FeedsDecision(n) == decision) out.push_back(n);
  }
  return out;
}

TEST(PlanShapes, DeskScale) {
  HarnessConfig h;
  const ModelShapes s = PlanShapes(h.model_config());
  EXPECT_EQ(s.lifted_volume, (std::array<int, 4>{32, 32, 4, 16}));
  EXPECT_EQ(s.bev, (std::array<int, 3>{32, 32, 16}));
  EXPECT_EQ(s.instance_bev, (std::array<int, 3>{32, 32, 17}));
  EXPECT_EQ(s.decoder_layers, 3);
  EXPECT_EQ(s.logits, (std::array<int, 4>{32, 32, 4, 4}));
}

TEST(PlanShapes, PaperScale) {
  ModelConfig m;
  m.grid_dims = {128, 128, 16};
  m.channels = 128;
  m.num_classes = 19;
  const ModelShapes s = PlanShapes(m);
  EXPECT_EQ(s.lifted_volume, (std::array<int, 4>{128, 128, 16, 128}));
  EXPECT_EQ(s.scattered_volume, (std::array<int, 4>{128, 128, 16, 128}));
  EXPECT_EQ(s.decoder_layers, 5);
  EXPECT_EQ(s.logits, (std::array<int, 4>{128, 128, 16, 20}));
}

TEST(ModelConfig, ValidateRejectsInconsistencies) {
  ModelConfig m;
  m.window = 3;
  EXPECT_THROW(m.Validate(), ValidationError);
  m = ModelConfig{};
  m.feature_channels = {16};
  EXPECT_THROW(m.Validate(), ValidationError);
  m = ModelConfig{};
  m.lift_scale = 2;
  EXPECT_THROW(m.Validate(), ValidationError);
  m = ModelConfig{};
  m.grid_dims = {24, 24, 4};
  EXPECT_THROW(m.Validate(), ValidationError);
}

TEST(ModelParams, NamesAreUniqueAndCountsAgree) {
  const SmallScene s;
  const ModelParams p = InitParams(s.config, 1);
  std::set<std::string> names;
  std::size_t scalars = 0;
  p.ForEach([&](const std::string& name, const Mat& m) {
    EXPECT_TRUE(names.insert(name).second) << name;
    scalars += static_cast<std::size_t>(m.size());
  });
  EXPECT_EQ(scalars, p.NumScalars());
  EXPECT_TRUE(p.AllFinite());
  const ModelParams z = p.ZerosLike();
  z.ForEach([](const std::string&, const Mat& m) { EXPECT_EQ(MaxAbs(m), 0.0); });
  EXPECT_EQ(z.NumScalars(), p.NumScalars());
  EXPECT_EQ(p.layers.size(), 3u);
}

TEST(InitParams, DeterministicPerSeed) {
  const SmallScene s;
  const ModelParams a = InitParams(s.config, 9), b = InitParams(s.config, 9), c = InitParams(s.config, 10);
  std::vector<const Mat*> ta, tb, tc;
  a.ForEach([&](const std::string&, const Mat& m) { ta.push_back(&m); });
  b.ForEach([&](const std::string&, const Mat& m) { tb.push_back(&m); });
  c.ForEach([&](const std::string&, const Mat& m) { tc.push_back(&m); });
  bool any_diff = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_TRUE(BitwiseEqual(*ta[i], *tb[i]));
    any_diff = any_diff || !BitwiseEqual(*ta[i], *tc[i]);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Forward, LogitShapeAndDeterminism) {
  const SmallScene s;
  const ModelParams p = InitParams(s.config, 2, {false});
  ForwardOptions o;
  o.seed = 5;
  const ForwardResult a = Forward(s.config, s.fixture, p, o);
  const ForwardResult b = Forward(s.config, s.fixture, p, o);
  EXPECT_EQ(a.occupancy.logits.rows(), 8 * 8 * 2);
  EXPECT_EQ(a.occupancy.logits.cols(), s.config.num_classes + 1);
  EXPECT_TRUE(BitwiseEqual(a.occupancy.logits, b.occupancy.logits));
  EXPECT_EQ(a.losses.total, b.losses.total);
  EXPECT_TRUE(std::isfinite(a.losses.total));
}

TEST(Forward, DeskScaleLogitShape) {
  const HarnessConfig h;
  const SceneFixture f = GenerateScene(h, 0).fixture;
  const ForwardResult r = Forward(h.model_config(), f, InitParams(h.model_config(), 0));
  EXPECT_EQ(r.occupancy.logits.rows(), 32 * 32 * 4);
  EXPECT_EQ(r.occupancy.logits.cols(), 4);
}

TEST(Forward, ZeroOutputProjectionsGiveIdentityStack) {
  const SmallScene s;
  const ForwardResult r = Forward(s.config, s.fixture, InitParams(s.config, 3));
  ASSERT_GT(r.trace.proposals.count(), 0u);
  EXPECT_TRUE(BitwiseEqual(r.trace.scattered.data, r.trace.lifted.data));
  EXPECT_TRUE(BitwiseEqual(r.trace.refined.data, r.trace.lifted.data));
}

TEST(Forward, NonzeroOutputProjectionsChangeTheVolume) {
  const SmallScene s;
  const ForwardResult r = Forward(s.config, s.fixture, InitParams(s.config, 3, {false}));
  EXPECT_FALSE(BitwiseEqual(r.trace.refined.data, r.trace.lifted.data));
}

TEST(Forward, LedgerProducesEachSymbolOnceAndConsumesIt) {
  const SmallScene s;
  const ForwardResult r = Forward(s.config, s.fixture, InitParams(s.config, 3));
  const auto& producers = r.ledger.producers();
  const auto& consumers = r.ledger.consumers();
  ASSERT_FALSE(producers.empty());
  const std::set<std::string> terminal{"L"};
  for (const auto& [symbol, modules] : producers) {
    EXPECT_EQ(modules.size(), 1u) << symbol;
    if (!terminal.count(symbol)) {
      EXPECT_TRUE(consumers.count(symbol) && !consumers.at(symbol).empty()) << symbol;
    }
  }
  for (const auto& [symbol, modules] : consumers) EXPECT_TRUE(producers.count(symbol)) << symbol;
  for (const char* symbol : {"V", "M", "Q", "S", "F_bev", "P_l", "P^", "Z", "alpha", "L_recon", "O"}) {
    EXPECT_TRUE(producers.count(symbol)) << symbol;
  }
}

TEST(Forward, RecordsDenominatorsWhenAsked) {
  const SmallScene s;
  ForwardOptions o;
  o.record_denominators = true;
  const ForwardResult r = Forward(s.config, s.fixture, InitParams(s.config, 3), o);
  std::size_t recorded = 0;
  for (const auto& layer : r.trace.layers) recorded += layer.denominators.size();
  EXPECT_GT(recorded, 0u);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const SmallScene s;
  const ModelParams p = InitParams(s.config, 4, {false});
  const ForwardResult f = Forward(s.config, s.fixture, p);
  const ModelParams g = Backward(s.config, s.fixture, p, f, LossGradients{});
  g.ForEach([](const std::string& name, const Mat& m) { EXPECT_EQ(MaxAbs(m), 0.0) << name; });
}

TEST(Backward, ZeroProposalsLeaveSgdaGradientsZero) {
  SmallScene s;
  s.fixture.depth_map.data.setZero();
  const ModelParams p = InitParams(s.config, 4, {false});
  const ForwardResult f = Forward(s.config, s.fixture, p);
  ASSERT_EQ(f.trace.proposals.count(), 0u);
  EXPECT_TRUE(BitwiseEqual(f.trace.scattered.data, f.trace.lifted.data));
  const ModelParams g = Backward(s.config, s.fixture, p, f, LossGradients::OfTotal(s.config.loss_weights));
  double live = 0.0;
  g.ForEach([&](const std::string& name, const Mat& m) {
    if (name.rfind("layers.", 0) == 0) {
      EXPECT_EQ(MaxAbs(m), 0.0) << name;
    } else {
      live = std::max(live, MaxAbs(m));
    }
  });
  EXPECT_GT(live, 0.0);
}

TEST(Backward, TotalLossProbeMatchesFiniteDifferences) {
  const SmallScene s;
  const ModelParams p = InitParams(s.config, 5, {false});
  ForwardOptions hard;
  hard.seed = 1;
  const ProbeReport a = ProbeTotalLossGradient(s.config, s.fixture, p, hard, 24, 7, TopLevelPrefixes(p, false));
  ForwardOptions soft = hard;
  soft.hard_decisions = false;
  const ProbeReport b = ProbeTotalLossGradient(s.config, s.fixture, p, soft, 8, 8, TopLevelPrefixes(p, true));
  EXPECT_EQ(a.entries.size(), 24u);
  EXPECT_LT(a.max_error, 1e-3);
  EXPECT_LT(b.max_error, 1e-3);
}

TEST(TrainSteps, ZeroLearningRateIsConstant) {
  const SmallScene s;
  ModelParams p = InitParams(s.config, 6);
  const TrainResult r = TrainSteps(s.config, s.fixture, p, 4, 0.0);
  ASSERT_EQ(r.totals.size(), 4u);
  for (double t : r.totals) EXPECT_EQ(t, r.totals.front());
}

TEST(TrainSteps, DeterministicAndDecreasing) {
  const SmallScene s;
  ModelParams a = InitParams(s.config, 6), b = InitParams(s.config, 6);
  const TrainResult ra = TrainSteps(s.config, s.fixture, a, 8, 2e-4);
  const TrainResult rb = TrainSteps(s.config, s.fixture, b, 8, 2e-4);
  EXPECT_EQ(ra.totals, rb.totals);
  EXPECT_LT(ra.totals.back(), ra.totals.front());
}

TEST(TrainSteps, DivergenceNamesTheStep) {
  const SmallScene s;
  ModelParams p = InitParams(s.config, 6);
  try {
    TrainSteps(s.config, s.fixture, p, 50, 1e6);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(TrainSteps, RejectsBadArguments) {
  const SmallScene s;
  ModelParams p = InitParams(s.config, 6);
  EXPECT_THROW(TrainSteps(s.config, s.fixture, p, 0, 0.1), ValidationError);
  EXPECT_THROW(TrainSteps(s.config, s.fixture, p, 1, -0.1), ValidationError);
}

TEST(SceneFixture, ValidateCatchesInconsistentInputs) {
  SmallScene s;
  EXPECT_NO_THROW(s.fixture.Validate());
  SceneFixture bad = s.fixture;
  bad.context = FeatureMap(3, 3, 8);
  EXPECT_THROW(bad.Validate(), ValidationError);
  bad = s.fixture;
  bad.labels.pop_back();
  EXPECT_THROW(bad.Validate(), ValidationError);
  bad = s.fixture;
  bad.mask.instance_count += 1;
  EXPECT_THROW(bad.Validate(), ValidationError);
}

}  // namespace
}  // namespace ocean
