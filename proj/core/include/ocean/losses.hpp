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

// Occupancy training losses and IoU / mIoU evaluation.

#ifndef OCEAN_LOSSES_HPP_
#define OCEAN_LOSSES_HPP_

#include <optional>
#include <span>
#include <vector>

#include "ocean/geometry.hpp"
#include "ocean/tensor.hpp"

namespace ocean {

inline constexpr int kIgnoreLabel = 255;
inline constexpr int kEmptyLabel = 0;
inline constexpr double kLogFloor = 1e-8;

// Per-voxel logits over Mc + 1 classes (class 0 = empty) with labels in
// {0..Mc} or kIgnoreLabel.
struct SemanticOccupancy {
  GridSpec grid;
  Mat logits;
  std::vector<int> labels;

  int num_classes() const { return static_cast<int>(logits.cols()); }
  void Validate() const;
};

// Mean over non-ignored voxels of -log softmax(logits)[label].
double CrossEntropyLoss(const Mat& logits, std::span<const int> labels);
Mat CrossEntropyLossBackward(const Mat& logits, std::span<const int> labels, double d_loss = 1.0);

struct ScalLosses {
  double semantic = 0.0;
  double geometric = 0.0;
};

// Soft precision / recall / specificity affinity losses. The semantic
// variant averages -(log P_c + log R_c + log S_c) over every class with
// ground-truth support (empty included); the geometric variant scores the
// occupied class of the binary empty/occupied reduction and is 0 when no
// voxel is occupied. Ratios are floored at kLogFloor inside the logs.
ScalLosses ComputeScalLosses(const Mat& logits, std::span<const int> labels);
Mat ScalLossesBackward(const Mat& logits, std::span<const int> labels, double d_semantic, double d_geometric);

// Mean over pixels with positive finite gt depth of -log pred[p, bin(gt[p])].
double DepthLoss(const FeatureMap& pred_dist, const FeatureMap& gt_depth, const DepthBinning& binning);
Mat DepthLossBackward(const FeatureMap& pred_dist, const FeatureMap& gt_depth, const DepthBinning& binning,
                      double d_loss = 1.0);

struct LossWeights {
  double depth = 0.001;
  double recon = 0.1;
};

struct LossComponents {
  double ce = 0.0;
  double scal_sem = 0.0;
  double scal_geo = 0.0;
  double depth = 0.0;
  double recon = 0.0;
};

struct LossReport {
  LossComponents components;
  LossWeights weights;
  double total = 0.0;
};

// total = w_d * depth + w_r * recon + ce + scal_geo + scal_sem. Throws
// NumericalError when a component is not finite.
LossReport TotalLoss(const LossComponents& components, const LossWeights& weights = {});

struct ClassIou {
  int label = 0;
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  std::optional<double> iou;  // empty when the class is absent from pred and gt
};

struct MetricReport {
  double iou = 0.0;   // binary occupied vs. empty
  double miou = 0.0;  // mean over semantic classes present in pred or gt
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  std::vector<ClassIou> per_class;  // labels 1..Mc
};

// Voxels where either label is kIgnoreLabel are skipped. An empty union
// scores 1 (binary IoU, and mIoU when no semantic class is present).
MetricReport IouMiou(std::span<const int> pred, std::span<const int> gt, int num_semantic_classes);

std::vector<int> ArgmaxLabels(const Mat& logits);

}  // namespace ocean

#endif  // OCEAN_LOSSES_HPP_
