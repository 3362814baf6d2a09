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

// Object-centric attention kernels:
//   * scattered linear attention inside one instance cluster,
//   * its depth-similarity weighted 3D variant and the multi-scale driver,
//   * similarity-gated deformable attention over the image plane,
//   * non-shifted window attention on BEV grids.
// Every kernel has an analytic vector-Jacobian product.

#ifndef OCEAN_ATTENTION_HPP_
#define OCEAN_ATTENTION_HPP_

#include <span>
#include <vector>

#include "ocean/geometry.hpp"
#include "ocean/grouping.hpp"
#include "ocean/nn.hpp"
#include "ocean/tensor.hpp"

namespace ocean {

// phi(x) = elu(x) + 1, elementwise. Strictly positive for finite x.
Mat KernelPhi(const Mat& x);
Mat KernelPhiBackward(const Mat& x, const Mat& d_y);

// Linear attention of m queries over n keys/values:
//   out_i = phi(Q_i) S / (phi(Q_i) z),  S = sum_p phi(K_p)^T V_p,  z = sum_p phi(K_p).
// n == 0 returns the queries unchanged. If `denominators` is non-null it
// receives the m per-query denominators.
Mat SgaCluster(const Mat& q, const Mat& k, const Mat& v, std::vector<double>* denominators = nullptr);

struct SgaGradients {
  Mat d_q;
  Mat d_k;
  Mat d_v;
};
SgaGradients SgaClusterBackward(const Mat& q, const Mat& k, const Mat& v, const Mat& d_out);

// A[i, p] = pixel_dists[p, bin(proposal_depths[i])].
Mat DepthSimilarity(std::span<const double> proposal_depths, const Mat& pixel_dists,
                    const DepthBinning& binning);

enum class DenominatorMode {
  kUnweighted,  // sum_p <phi(Q_i), phi(K_p)>
  kWeighted,    // sum_p A[i, p] <phi(Q_i), phi(K_p)>
};

// Floor applied to weighted denominators, which can vanish when a row of A is zero.
inline constexpr double kWeightedDenominatorFloor = 1e-12;

// out_i = sum_p A[i,p] <phi(Q_i), phi(K_p)> V_p / den_i. When every entry of
// A is exactly 1 the factorized SgaCluster path is taken.
Mat Sga3dCluster(const Mat& q, const Mat& k, const Mat& v, const Mat& a,
                 DenominatorMode mode = DenominatorMode::kUnweighted,
                 std::vector<double>* denominators = nullptr);

struct Sga3dGradients {
  Mat d_q;
  Mat d_k;
  Mat d_v;
  Mat d_a;
};
Sga3dGradients Sga3dClusterBackward(const Mat& q, const Mat& k, const Mat& v, const Mat& a,
                                    DenominatorMode mode, const Mat& d_out);

// Pixel-level keys, values and depth distributions of one feature scale;
// rows follow that scale's pixel raster order.
struct ScaleAttentionInputs {
  Mat keys;
  Mat values;
  Mat depth_dist;
};

struct Sga3dOptions {
  DenominatorMode mode = DenominatorMode::kUnweighted;
  // When set, receives one entry per (cluster, scale) that ran, holding the
  // per-query denominators.
  std::vector<std::vector<double>>* debug_denominators = nullptr;
};

// Runs Sga3dCluster for every cluster and scale and returns the per-proposal
// residual (sum over scales). Excluded proposals and clusters without pixels
// at a scale receive no contribution from it.
Mat RunSga3d(const InstanceClustering& clustering, const Mat& queries, std::span<const double> proposal_depths,
             std::span<const ScaleAttentionInputs> scales, const DepthBinning& binning,
             const Sga3dOptions& options = {});

struct RunSga3dGradients {
  Mat d_queries;
  std::vector<Mat> d_keys;
  std::vector<Mat> d_values;
  std::vector<Mat> d_depth_dist;
};
RunSga3dGradients RunSga3dBackward(const InstanceClustering& clustering, const Mat& queries,
                                   std::span<const double> proposal_depths,
                                   std::span<const ScaleAttentionInputs> scales, const DepthBinning& binning,
                                   DenominatorMode mode, const Mat& d_residual);

// Bilinear interpolation at p = (x, y) in feature-map coordinates (x is the
// column), with p clamped to the map border.
RowVec BilinearSample(const FeatureMap& map, const Vec2& p);
// Accumulates into d_map (same shape as map) and returns dL/dp.
Vec2 BilinearSampleBackward(const FeatureMap& map, const Vec2& p, const RowVec& d_out, FeatureMap* d_map);

struct GsgaParams {
  Mat projection;  // C x C, applied to sampled image features
  Linear offsets;  // C -> 2K, (dx, dy) per sampling point
  Linear weights;  // C -> K attention logits
  Mat gate;        // C x C_sam, projects segmentation features
  Mat gate_bias;   // 1 x 1
  bool gate_bypass = false;

  int num_points() const { return weights.out_features(); }
  int channels() const { return static_cast<int>(projection.rows()); }
  GsgaParams ZerosLike() const;
};

// Aggregated term for every query (the caller adds it as a residual):
//   out = sum_k G_k * A_k * W F(p_q + dp_k),
//   G_k = sigmoid(<q, gate * S(p_q + dp_k)> / sqrt(C) + gate_bias).
// positions are feature-map coordinates of image and sam, which must share
// spatial dims.
Mat Gsga(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image, const FeatureMap& sam,
         const GsgaParams& params);

struct GsgaGradients {
  Mat d_queries;
  std::vector<Vec2> d_positions;
  FeatureMap d_image;
  FeatureMap d_sam;
  GsgaParams d_params;
};
GsgaGradients GsgaBackward(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image,
                           const FeatureMap& sam, const GsgaParams& params, const Mat& d_out);

// Single-head scaled dot-product attention inside non-overlapping w x w
// windows; keys and values are both taken from kv.
BevMap WindowAttention(const BevMap& query, const BevMap& kv, int window);

struct WindowAttentionGradients {
  BevMap d_query;
  BevMap d_kv;
};
WindowAttentionGradients WindowAttentionBackward(const BevMap& query, const BevMap& kv, int window,
                                                 const BevMap& d_out);

}  // namespace ocean

#endif  // OCEAN_ATTENTION_HPP_
