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

#ifndef OCEAN_HARNESS_HPP_
#define OCEAN_HARNESS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocean/geometry.hpp"
#include "ocean/pipeline.hpp"

namespace ocean {

// Everything needed to synthesize a scene and run the model on it.
struct HarnessConfig {
  int image_height = 64;
  int image_width = 64;
  GridSpec grid{{32, 32, 4}, Vec3(0.0, -6.4, -0.2), 0.4};
  DepthBinning binning{1.0, 17.0, 16};

  // Camera looking down +x, pitched toward the ground.
  double focal = 32.0;
  Vec3 camera_position = Vec3(-1.0, 0.0, 1.6);
  double pitch_degrees = 15.0;

  // Model settings; grid dims and depth bins are taken from the fields above.
  ModelConfig model;

  int min_instances = 1;
  int max_instances = 8;
  double feature_noise = 0.1;

  int train_steps = 50;
  double learning_rate = 5e-4;

  std::uint64_t seed = 0;
  std::string output_dir = "out";

  CameraModel camera() const;
  ModelConfig model_config() const;
  void Validate() const;
};

// Parses a JSON document. Unknown keys anywhere raise ValidationError.
HarnessConfig ParseHarnessConfig(const std::string& json_text);
HarnessConfig LoadHarnessConfig(const std::string& path);
std::string HarnessConfigToJson(const HarnessConfig& config);

// An axis-aligned box resting on the ground, in voxel units.
struct SceneBox {
  VoxelIndex min_cell;  // inclusive
  VoxelIndex max_cell;  // exclusive
  int label = 0;
};

struct GeneratedScene {
  SceneFixture fixture;
  std::vector<SceneBox> boxes;
};

// Places boxes on a ground plane, ray-casts depth and instance IDs, labels
// voxels and synthesizes instance-correlated features. Deterministic in seed.
GeneratedScene GenerateScene(const HarnessConfig& config, std::uint64_t seed);

// Ray-cast depth (camera z) at image coordinate (u, v); 0 for no hit inside
// the grid. `instance` receives the 1-based index of the box hit, or 0.
double CastDepth(const HarnessConfig& config, const std::vector<SceneBox>& boxes, double u, double v,
                 int* instance = nullptr);

// Finite-difference VJP checks over small random inputs.
struct GradcheckTrial {
  std::map<std::string, double> input_errors;  // per input tensor
  double max_error = 0.0;
};

struct GradcheckReport {
  std::string op;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::vector<GradcheckTrial> trials;
  double max_error = 0.0;
  bool passed() const { return max_error < tolerance; }
};

std::vector<std::string> GradcheckOps();
// Trials run on up to `threads` workers with seeds derived per trial.
GradcheckReport RunGradcheck(const std::string& op, int trials, std::uint64_t seed, int threads = 1);

// Total-loss gradient against central differences on sampled parameter entries.
struct ProbeEntry {
  std::string tensor;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct ProbeReport {
  std::vector<ProbeEntry> entries;
  double max_error = 0.0;
};

// Parameters whose names start with an entry of `prefixes` are eligible; an
// empty list means all parameters.
ProbeReport ProbeTotalLossGradient(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                                   const ForwardOptions& options, int samples, std::uint64_t seed,
                                   const std::vector<std::string>& prefixes = {}, double step = 1e-5);

// Brute-force comparison of the attention kernels against pairwise or dense
// reference evaluations.
struct OracleReport {
  std::string op;
  int trials = 0;
  double max_abs_error = 0.0;
};

std::vector<std::string> OracleOps();
OracleReport RunOracle(const std::string& op, int trials, std::uint64_t seed);

}  // namespace ocean

#endif  // OCEAN_HARNESS_HPP_
