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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <set>
#include <string>

#include "ocean/harness.hpp"
#include "ocean/io.hpp"
#include "test_util.hpp"

namespace ocean {
namespace {

using testing::BitwiseEqual;

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ocean_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(HarnessConfig, JsonRoundTrip) {
  HarnessConfig c;
  c.seed = 17;
  c.model.window = 2;
  c.model.denominator_mode = DenominatorMode::kWeighted;
  c.learning_rate = 0.25;
  const HarnessConfig back = ParseHarnessConfig(HarnessConfigToJson(c));
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.model.window, 2);
  EXPECT_EQ(back.model.denominator_mode, DenominatorMode::kWeighted);
  EXPECT_EQ(back.learning_rate, 0.25);
  EXPECT_EQ(back.grid.dims, c.grid.dims);
  EXPECT_EQ(HarnessConfigToJson(back), HarnessConfigToJson(c));
}

TEST(HarnessConfig, EmptyDocumentGivesDefaults) {
  const HarnessConfig c = ParseHarnessConfig("{}");
  EXPECT_EQ(HarnessConfigToJson(c), HarnessConfigToJson(HarnessConfig{}));
}

TEST(HarnessConfig, RejectsUnknownKeys) {
  EXPECT_THROW(ParseHarnessConfig(R"({"sed": 1})"), ValidationError);
  EXPECT_THROW(ParseHarnessConfig(R"({"model": {"channel": 8}})"), ValidationError);
  EXPECT_THROW(ParseHarnessConfig(R"({"train": {"steps": 3, "momentum": 0.9}})"), ValidationError);
}

TEST(HarnessConfig, RejectsMalformedInput) {
  EXPECT_THROW(ParseHarnessConfig("{"), ValidationError);
  EXPECT_THROW(ParseHarnessConfig(R"({"seed": "zero"})"), ValidationError);
  EXPECT_THROW(ParseHarnessConfig(R"({"model": {"denominator": "both"}})"), ValidationError);
  EXPECT_THROW(ParseHarnessConfig(R"({"scene": {"min_instances": 5, "max_instances": 2}})"), ValidationError);
  EXPECT_THROW(LoadHarnessConfig("/nonexistent/ocean.json"), ValidationError);
}

TEST(GenerateScene, DeterministicInSeed) {
  const HarnessConfig c = testing::SmallConfig();
  const GeneratedScene a = GenerateScene(c, 11), b = GenerateScene(c, 11);
  EXPECT_EQ(a.fixture.labels, b.fixture.labels);
  EXPECT_EQ(a.fixture.mask.ids, b.fixture.mask.ids);
  EXPECT_TRUE(BitwiseEqual(a.fixture.depth_map.data, b.fixture.depth_map.data));
  EXPECT_TRUE(BitwiseEqual(a.fixture.features[0].data, b.fixture.features[0].data));
  EXPECT_TRUE(BitwiseEqual(a.fixture.context.data, b.fixture.context.data));
}

TEST(GenerateScene, PlacesOneToEightBoxes) {
  HarnessConfig c;
  std::set<std::size_t> counts;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GeneratedScene s = GenerateScene(c, seed);
    EXPECT_GE(s.boxes.size(), 1u);
    EXPECT_LE(s.boxes.size(), 8u);
    EXPECT_LE(s.fixture.mask.instance_count, static_cast<int>(s.boxes.size()));
    counts.insert(s.boxes.size());
  }
  EXPECT_GT(counts.size(), 1u);
}

TEST(GenerateScene, ZeroInstancesLeaveOnlyGround) {
  HarnessConfig c = testing::SmallConfig();
  c.min_instances = 0;
  c.max_instances = 0;
  const GeneratedScene s = GenerateScene(c, 3);
  EXPECT_TRUE(s.boxes.empty());
  EXPECT_EQ(s.fixture.mask.instance_count, 0);
  for (int label : s.fixture.labels) EXPECT_LE(label, 1);
}

void ExpectOccupancyMatchesLabels(const HarnessConfig& c, std::uint64_t seed) {
  const GeneratedScene s = GenerateScene(c, seed);
  const SceneFixture& f = s.fixture;
  const GridSpec& g = f.grid;
  std::size_t hits = 0;
  for (int i = 0; i < f.image_height; ++i) {
    for (int j = 0; j < f.image_width; ++j) {
      int instance = -1;
      const double d = CastDepth(c, s.boxes, j, i, &instance);
      ASSERT_EQ(d, f.depth_map.data(f.depth_map.index(i, j), 0));
      ASSERT_EQ(instance > 0, f.mask.at(i, j) > 0);
      if (d <= 0.0) continue;
      const auto voxel = g.VoxelOf(BackProject(j, i, d, f.camera));
      ASSERT_TRUE(voxel.has_value());
      const int label = f.labels[static_cast<std::size_t>(g.linear(*voxel))];
      ++hits;
      if (instance == 0) {
        EXPECT_EQ((*voxel)[2], 0);
        EXPECT_EQ(label, 1);
        continue;
      }
      const SceneBox& box = s.boxes[static_cast<std::size_t>(instance - 1)];
      for (int a = 0; a < 2; ++a) {
        EXPECT_GE((*voxel)[a], box.min_cell[a]);
        EXPECT_LT((*voxel)[a], box.max_cell[a]);
      }
      EXPECT_TRUE(label == box.label || ((*voxel)[2] == 0 && label == 1)) << "pixel " << i << "," << j;
    }
  }
  EXPECT_GT(hits, 0u);
  const OccupancyMask occupancy = OccupancyMaskFromDepth(f.depth_map, f.camera, g);
  for (std::size_t v = 0; v < occupancy.cells.size(); ++v) {
    if (occupancy.cells[v]) EXPECT_NE(f.labels[v], kEmptyLabel) << "voxel " << v;
  }
}

TEST(GenerateScene, OccupancyAgreesWithLabels) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) ExpectOccupancyMatchesLabels(HarnessConfig{}, seed);
  for (std::uint64_t seed = 0; seed < 6; ++seed) ExpectOccupancyMatchesLabels(testing::SmallConfig(), seed);
}

TEST(Gradcheck, ZeroTrialsGiveEmptyReport) {
  const GradcheckReport r = RunGradcheck("linear", 0, 1);
  EXPECT_TRUE(r.trials.empty());
  EXPECT_EQ(r.max_error, 0.0);
  EXPECT_TRUE(r.passed());
}

TEST(Gradcheck, UnknownOpThrows) {
  EXPECT_THROW(RunGradcheck("no_such_op", 1, 1), ValidationError);
  EXPECT_THROW(RunOracle("no_such_op", 1, 1), ValidationError);
}

TEST(Gradcheck, ThreadCountDoesNotChangeResults) {
  const GradcheckReport a = RunGradcheck("window_attention", 6, 4, 1);
  const GradcheckReport b = RunGradcheck("window_attention", 6, 4, 3);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t t = 0; t < a.trials.size(); ++t) EXPECT_EQ(a.trials[t].input_errors, b.trials[t].input_errors);
}

std::string SnakeCase(const std::string& camel) {
  std::string out;
  for (char ch : camel) {
    if (std::isupper(static_cast<unsigned char>(ch))) {
      if (!out.empty() && !std::isdigit(static_cast<unsigned char>(out.back()))) out += '_';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else {
      out += ch;
    }
  }
  return out;
}

TEST(Gradcheck, EveryBackwardIsRegistered) {
  const std::vector<std::string> ops = GradcheckOps();
  const std::set<std::string> registered(ops.begin(), ops.end());
  const std::regex backward(R"(\b([A-Z][A-Za-z0-9]*)Backward\s*\()");
  std::set<std::string> declared;
  for (const auto& entry : fs::directory_iterator(fs::path(OCEAN_SOURCE_DIR) / "core/include/ocean")) {
    const std::string text = ReadAll(entry.path());
    for (auto it = std::sregex_iterator(text.begin(), text.end(), backward); it != std::sregex_iterator(); ++it) {
      declared.insert(SnakeCase((*it)[1].str()));
    }
  }
  ASSERT_GE(declared.size(), 10u);
  for (const auto& op : declared) EXPECT_TRUE(registered.count(op)) << op;
}

TEST(Oracle, AllOpsAgree) {
  for (const auto& op : OracleOps()) {
    const OracleReport r = RunOracle(op, 20, 2);
    EXPECT_EQ(r.trials, 20);
    EXPECT_LT(r.max_abs_error, 1e-6) << op;
  }
}

TEST(VolumeFile, RoundTripAndHeader) {
  const fs::path dir = TempDir("volume");
  GridSpec g{{2, 3, 2}, Vec3::Zero(), 1.0};
  Mat data(12, 2);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = 0.5 * static_cast<double>(i) - 3.0;
  WriteVolumeFile((dir / "v.ocnv").string(), VolumeFromGrid(g, data));
  const VolumeFile back = ReadVolumeFile((dir / "v.ocnv").string());
  EXPECT_EQ(back.dims, (std::array<std::uint32_t, 3>{2, 3, 2}));
  EXPECT_EQ(back.flags, 0u);
  EXPECT_TRUE(BitwiseEqual(back.data, data));
  const std::string bytes = ReadAll(dir / "v.ocnv");
  EXPECT_EQ(bytes.size(), 32u + 12u * 2u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "OCNV");
}

TEST(VolumeFile, LabelRoundTrip) {
  const fs::path dir = TempDir("labels");
  GridSpec g{{2, 2, 1}, Vec3::Zero(), 1.0};
  const std::vector<int> labels{0, 3, 1, 2};
  WriteVolumeFile((dir / "l.ocnv").string(), LabelVolume(g, labels));
  const VolumeFile back = ReadVolumeFile((dir / "l.ocnv").string());
  EXPECT_EQ(back.flags & kVolumeFlagLabels, kVolumeFlagLabels);
  EXPECT_EQ(LabelsFromVolume(back), labels);
  EXPECT_THROW(LabelsFromVolume(VolumeFromGrid(g, Mat::Zero(4, 1))), ValidationError);
}

TEST(VolumeFile, RejectsCorruptFiles) {
  const fs::path dir = TempDir("corrupt");
  GridSpec g{{1, 1, 2}, Vec3::Zero(), 1.0};
  WriteVolumeFile((dir / "v.ocnv").string(), VolumeFromGrid(g, Mat::Ones(2, 1)));
  std::string bytes = ReadAll(dir / "v.ocnv");
  std::ofstream((dir / "short.ocnv"), std::ios::binary) << bytes.substr(0, bytes.size() - 1);
  EXPECT_THROW(ReadVolumeFile((dir / "short.ocnv").string()), ValidationError);
  std::ofstream((dir / "long.ocnv"), std::ios::binary) << bytes << 'x';
  EXPECT_THROW(ReadVolumeFile((dir / "long.ocnv").string()), ValidationError);
  bytes[0] = 'X';
  std::ofstream((dir / "magic.ocnv"), std::ios::binary) << bytes;
  EXPECT_THROW(ReadVolumeFile((dir / "magic.ocnv").string()), ValidationError);
  EXPECT_THROW(ReadVolumeFile((dir / "missing.ocnv").string()), ValidationError);
}

TEST(ParamsFile, RoundTripIsExact) {
  const fs::path dir = TempDir("params");
  const ModelConfig config = testing::SmallConfig().model_config();
  const ModelParams p = InitParams(config, 3, {false});
  WriteParamsFile((dir / "p.ocnp").string(), p);
  ModelParams q = InitParams(config, 99);
  ReadParamsFile((dir / "p.ocnp").string(), q);
  std::vector<const Mat*> a, b;
  p.ForEach([&](const std::string&, const Mat& m) { a.push_back(&m); });
  q.ForEach([&](const std::string&, const Mat& m) { b.push_back(&m); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(BitwiseEqual(*a[i], *b[i]));
  EXPECT_EQ(ReadAll(dir / "p.ocnp").substr(0, 4), "OCNP");
}

TEST(ParamsFile, RejectsMismatchedModel) {
  const fs::path dir = TempDir("params_mismatch");
  ModelConfig config = testing::SmallConfig().model_config();
  WriteParamsFile((dir / "p.ocnp").string(), InitParams(config, 3));
  config.channels = 4;
  ModelParams other = InitParams(config, 3);
  EXPECT_THROW(ReadParamsFile((dir / "p.ocnp").string(), other), ValidationError);
}

TEST(Pgm, WritesBinaryHeaderAndClampedPixels) {
  const fs::path dir = TempDir("pgm");
  WritePgm((dir / "a.pgm").string(), 3, 2, {0, 1, 2, 3, 4, 300}, 255);
  const std::string bytes = ReadAll(dir / "a.pgm");
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
  EXPECT_THROW(WritePgm((dir / "b.pgm").string(), 2, 2, {0, 1, 2}, 255), ValidationError);
}

TEST(Pgm, ScaledMapSpansFullRange) {
  const fs::path dir = TempDir("pgm_scaled");
  WriteScaledPgm((dir / "s.pgm").string(), 2, 1, {-1.0, 3.0});
  const std::string bytes = ReadAll(dir / "s.pgm");
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
}

TEST(Reports, JsonContainsComponentsAndMetrics) {
  LossComponents c{1.0, 1.0, 1.0, 1.0, 1.0};
  const std::string loss = LossReportJson(TotalLoss(c, {0.001, 0.1}));
  for (const char* key : {"total", "ce", "scal_sem", "scal_geo", "depth", "recon"}) {
    EXPECT_NE(loss.find(std::string("\"") + key + "\""), std::string::npos) << key;
  }
  const std::vector<int> labels{0, 1, 2, 1};
  const std::string metrics = MetricReportJson(IouMiou(labels, labels, 3));
  EXPECT_NE(metrics.find("\"miou\""), std::string::npos);
  EXPECT_NE(metrics.find("\"iou\""), std::string::npos);
}

}  // namespace
}  // namespace ocean
