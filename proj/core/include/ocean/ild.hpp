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

// Instance-aware local diffusion: pooled instance features are decoded into
// per-instance BEV maps, gated by a straight-through Gumbel decision, blended
// with softmax weights and used as keys/values to refine the scene BEV.

#ifndef OCEAN_ILD_HPP_
#define OCEAN_ILD_HPP_

#include <random>
#include <span>
#include <vector>

#include "ocean/geometry.hpp"
#include "ocean/grouping.hpp"
#include "ocean/nn.hpp"
#include "ocean/tensor.hpp"

namespace ocean {

inline constexpr double kSelectionEpsilon = 1e-6;
inline constexpr double kGumbelTemperature = 1.0;

struct InstanceFeatureSet {
  std::vector<int> ids;
  Mat features;  // L x C
};

// Sums each instance's pixel features within a scale, then across scales.
// pixel_features[s] has one row per pixel of clustering.scales[s]. Instances
// without pixels at any scale are dropped.
InstanceFeatureSet PoolInstanceFeatures(const InstanceClustering& clustering,
                                        std::span<const Mat> pixel_features);
std::vector<Mat> PoolInstanceFeaturesBackward(const InstanceClustering& clustering,
                                              std::span<const Mat> pixel_features,
                                              const InstanceFeatureSet& pooled, const Mat& d_features);

// Transposed convolution with kernel 2 and stride 2:
//   out[2i + a, 2j + b] = W[(2a + b) * Cout .. +Cout, :] * in[i, j] + bias.
struct UpsampleLayer {
  Mat weight;  // 4*Cout x Cin
  Mat bias;    // 1 x Cout

  int in_channels() const { return static_cast<int>(weight.cols()); }
  int out_channels() const { return static_cast<int>(bias.cols()); }
};

struct DecoderLayout {
  int seed_x = 4;
  int seed_y = 4;
  int num_layers = 0;
};

// seed_x is fixed at 4; the number of doubling layers is log2(nx / 4).
// Throws ValidationError when nx / 4 is not a power of two or ny does not
// divide evenly by the resulting upsampling factor.
DecoderLayout PlanDecoder(int nx, int ny);

struct DecoderParams {
  Linear seed;  // C -> seed_x * seed_y * C_seed
  std::vector<UpsampleLayer> layers;
  DecoderLayout layout;

  int channels() const { return seed.in_features(); }
  DecoderParams ZerosLike() const;
};

// Builds an all-zero decoder for feature width C over an nx x ny BEV.
DecoderParams MakeDecoder(int channels, int nx, int ny);

struct DecodedBev {
  BevMap map;    // nx x ny x C
  double alpha;  // mean of the extra channel
};

DecodedBev DecodeInstanceBev(const RowVec& feature, const DecoderParams& params);
// Accumulates into grad and returns dL/dfeature.
RowVec DecodeInstanceBevBackward(const RowVec& feature, const DecoderParams& params, const BevMap& d_map,
                                 double d_alpha, DecoderParams* grad);

// Two-layer MLP producing (select, drop) logits per instance.
struct DecisionHead {
  Linear hidden;
  Linear output;

  DecisionHead ZerosLike() const { return {hidden.ZerosLike(), output.ZerosLike()}; }
};

Mat DecisionLogits(const DecisionHead& head, const Mat& features);
Mat DecisionLogitsBackward(const DecisionHead& head, const Mat& features, const Mat& d_logits,
                           DecisionHead* grad);

// L x 2 standard Gumbel noise drawn in row-major order.
Mat SampleGumbelNoise(Eigen::Index instances, std::mt19937_64& rng);

struct DecisionVector {
  std::vector<double> z;  // forward values: {0, 1} when hard
  Mat soft;               // L x 2 relaxed probabilities
  double temperature = kGumbelTemperature;
  bool hard = true;
};

// soft = softmax((logits + noise) / tau); z_l = 1 iff soft(l, 0) >= soft(l, 1)
// (ties select). With hard = false, z_l = soft(l, 0). The backward always
// differentiates soft(l, 0) (straight-through).
DecisionVector GumbelDecision(const Mat& logits, const Mat& noise, double temperature, bool hard = true);
DecisionVector GumbelDecision(const Mat& logits, double temperature, std::mt19937_64& rng);
Mat GumbelDecisionBackward(const DecisionVector& decision, std::span<const double> d_z);

struct CombinedBev {
  BevMap combined;
  Vec weights;     // softmax(alpha)
  Vec normalized;  // Z * w / (sum Z * w + eps)
};

CombinedBev CombineBev(std::span<const BevMap> maps, const Vec& alpha, std::span<const double> z,
                       double epsilon = kSelectionEpsilon);

struct CombineGradients {
  std::vector<BevMap> d_maps;
  Vec d_alpha;
  std::vector<double> d_z;
};
CombineGradients CombineBevBackward(std::span<const BevMap> maps, const Vec& alpha, std::span<const double> z,
                                    double epsilon, const BevMap& d_combined);

// Plain sum of squared differences.
double ReconstructionLoss(const BevMap& predicted, const BevMap& target);
// Returns dL/dpredicted; dL/dtarget is its negation.
Mat ReconstructionLossBackward(const BevMap& predicted, const BevMap& target, double d_loss = 1.0);

struct RefineParams {
  Mat input_proj;   // C x (z*C), flattened voxel column -> query
  Linear value;     // C -> C applied to the instance BEV
  Mat output_proj;  // (z*C) x C, refined BEV -> voxel column
  int window = 4;

  RefineParams ZerosLike() const;
};

// Concatenates the z cells of every BEV column: (x*y) x (z*C).
Mat FlattenColumns(const VoxelVolume& volume);

VoxelVolume RefineScene(const VoxelVolume& volume, const BevMap& instance_bev, const RefineParams& params);

struct RefineGradients {
  Mat d_volume;
  BevMap d_instance_bev;
  RefineParams d_params;
};
RefineGradients RefineSceneBackward(const VoxelVolume& volume, const BevMap& instance_bev,
                                    const RefineParams& params, const Mat& d_out);

}  // namespace ocean

#endif  // OCEAN_ILD_HPP_
