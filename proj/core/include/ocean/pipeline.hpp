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

// End-to-end scene completion model: lifting, the three-layer SGDA block
// over query proposals, instance-aware local diffusion and the prediction
// head, with a hand-chained backward pass over every parameter.

#ifndef OCEAN_PIPELINE_HPP_
#define OCEAN_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ocean/attention.hpp"
#include "ocean/geometry.hpp"
#include "ocean/grouping.hpp"
#include "ocean/ild.hpp"
#include "ocean/losses.hpp"
#include "ocean/nn.hpp"

namespace ocean {

struct ModelConfig {
  int channels = 16;  // C, proposal / voxel feature width
  std::vector<int> scales{4, 8, 16};
  std::vector<int> feature_channels{16, 24, 32};  // per scale
  int lift_scale = 8;
  int context_channels = 16;
  int sam_channels = 8;
  int depth_bins = 16;
  int num_classes = 3;  // Mc, semantic classes excluding empty
  int head_hidden = 16;
  int num_layers = 3;
  int gsga_points = 4;
  int window = 4;
  std::array<int, 3> grid_dims{32, 32, 4};
  double temperature = kGumbelTemperature;
  double epsilon = kSelectionEpsilon;
  LossWeights loss_weights;
  DenominatorMode denominator_mode = DenominatorMode::kUnweighted;

  int lift_scale_index() const;
  void Validate() const;
};

// Shapes of the main intermediates, derived from the config alone.
struct ModelShapes {
  std::array<int, 4> lifted_volume;     // x, y, z, C
  std::array<int, 4> scattered_volume;  // x, y, z, C
  std::array<int, 3> bev;               // x, y, C
  std::array<int, 3> instance_bev;      // x, y, C + 1 (decoder output)
  int decoder_layers = 0;
  std::array<int, 4> logits;            // x, y, z, Mc + 1
};
ModelShapes PlanShapes(const ModelConfig& config);

struct SceneFixture {
  int image_height = 0;
  int image_width = 0;
  std::vector<int> scales;
  std::vector<FeatureMap> features;     // F^(s) per scale
  std::vector<FeatureMap> depth_prior;  // per-scale depth distributions (H/s x W/s x D)
  int lift_scale = 8;
  FeatureMap context;   // context features at the lift scale
  FeatureMap sam;       // segmentation-model features at the lift scale
  InstanceMask mask;    // full resolution
  FeatureMap depth_map; // full-resolution external depth (proposal source), 0 = no data
  FeatureMap gt_depth;  // lift-scale depth supervision, 0 = no data
  CameraModel camera;
  GridSpec grid;
  DepthBinning binning;
  std::vector<int> labels;  // one per voxel

  void Validate() const;
};

struct SgdaLayerParams {
  Mat norm_sga, norm_gsga, norm_ffn;  // 1 x C gains
  Linear sga_query, sga_key, sga_value, sga_output;
  GsgaParams gsga;
  Linear ffn_in, ffn_out;
};

struct ModelParams {
  Linear context_proj;                // C_ctx -> C
  std::vector<Linear> depth_heads;    // C1^(s) -> D, residual on the prior log-probabilities
  std::vector<Linear> pixel_proj;     // C1^(s) -> C
  std::vector<SgdaLayerParams> layers;
  Mat bev_proj;                       // C x C, scene BEV reconstruction target
  DecoderParams decoder;
  DecisionHead decision;
  RefineParams refine;
  Linear head_hidden;                 // C -> C'
  Linear head_out;                    // C' -> Mc + 1

  // Visits every tensor with a stable dotted name, in a fixed order.
  void ForEach(const std::function<void(const std::string&, Mat&)>& fn);
  void ForEach(const std::function<void(const std::string&, const Mat&)>& fn) const;
  ModelParams ZerosLike() const;
  std::size_t NumScalars() const;
  bool AllFinite() const;
};

struct InitOptions {
  // Zero the SGA3D / GSGA / FFN / refinement output projections so the
  // SGDA + ILD stack starts as the identity on the lifted volume.
  bool zero_output_projections = true;
};
ModelParams InitParams(const ModelConfig& config, std::uint64_t seed, const InitOptions& options = {});

// Records which module produced and consumed each named intermediate.
class SymbolLedger {
 public:
  void Produce(const std::string& symbol, const std::string& module);
  void Consume(const std::string& symbol, const std::string& module);
  const std::map<std::string, std::vector<std::string>>& producers() const { return producers_; }
  const std::map<std::string, std::set<std::string>>& consumers() const { return consumers_; }

 private:
  std::map<std::string, std::vector<std::string>> producers_;
  std::map<std::string, std::set<std::string>> consumers_;
};

struct ForwardOptions {
  std::uint64_t seed = 0;  // Gumbel noise stream
  bool hard_decisions = true;
  bool record_denominators = false;
};

struct LayerTrace {
  Mat x_in, norm_sga, query, residual, x_sga;
  std::vector<Mat> keys, values;
  Mat norm_gsga, gsga_out, x_gsga;
  Mat norm_ffn, ffn_hidden, ffn_act, x_out;
  std::vector<std::vector<double>> denominators;
};

struct ForwardTrace {
  std::vector<Mat> pixel_features;   // projected, per scale
  std::vector<Mat> depth_dist;       // per scale, rows = pixels
  FeatureMap context;                // projected context at the lift scale
  LiftPlan lift_plan;
  VoxelVolume lifted;                // V
  OccupancyMask occupancy;           // M
  QueryProposalSet proposals;        // Q
  std::vector<Vec2> proposal_positions;  // lift-scale feature coordinates
  std::vector<int> proposal_ids;
  std::vector<InstanceMask> scale_masks;
  InstanceClustering clustering;
  std::vector<LayerTrace> layers;
  VoxelVolume scattered;             // volume after SGDA
  InstanceFeatureSet instances;
  std::vector<DecodedBev> decoded;
  Mat decision_logits;
  DecisionVector decision;
  CombinedBev combined;              // P-hat and weights
  Mat column_sums;                   // sum over z of the scattered volume
  BevMap scene_bev;                  // F_bev
  VoxelVolume refined;
  Mat head_pre;
};

struct ForwardResult {
  SemanticOccupancy occupancy;
  LossReport losses;
  ForwardTrace trace;
  SymbolLedger ledger;
};

ForwardResult Forward(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                      const ForwardOptions& options = {});

// Upstream gradients of the scalar objective w.r.t. each loss component.
struct LossGradients {
  double ce = 0.0;
  double scal_sem = 0.0;
  double scal_geo = 0.0;
  double depth = 0.0;
  double recon = 0.0;

  // d total / d component for the configured weights.
  static LossGradients OfTotal(const LossWeights& weights);
};

ModelParams Backward(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                     const ForwardResult& forward, const LossGradients& upstream);

struct TrainResult {
  std::vector<double> totals;  // loss before each update
  std::vector<LossReport> reports;
};

// Plain gradient descent on the total loss of one fixture. Throws
// NumericalError naming the step when the loss becomes non-finite.
TrainResult TrainSteps(const ModelConfig& config, const SceneFixture& fixture, ModelParams& params, int steps,
                       double learning_rate, const ForwardOptions& options = {});

}  // namespace ocean

#endif  // OCEAN_PIPELINE_HPP_
