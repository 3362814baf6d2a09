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

#include "ocean/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ocean/nn.hpp"

namespace ocean {

void SemanticOccupancy::Validate() const {
  Require(logits.rows() == grid.num_voxels(), "semantic occupancy: one logit row per voxel required");
  Require(labels.size() == static_cast<std::size_t>(grid.num_voxels()), "semantic occupancy: one label per voxel");
  for (int y : labels) {
    Require(y == kIgnoreLabel || (y >= 0 && y < num_classes()), "semantic occupancy: label out of range");
  }
}

namespace {

void CheckLabels(const Mat& logits, std::span<const int> labels) {
  Require(static_cast<Eigen::Index>(labels.size()) == logits.rows(), "loss: one label per logit row required");
  for (int y : labels) {
    Require(y == kIgnoreLabel || (y >= 0 && y < logits.cols()), "loss: label out of range");
  }
}

double LogSumExp(const RowVec& row) {
  const double m = row.maxCoeff();
  return m + std::log((row.array() - m).exp().sum());
}

double NegLogFloored(double x) { return -std::log(std::max(x, kLogFloor)); }

}  // namespace

double CrossEntropyLoss(const Mat& logits, std::span<const int> labels) {
  CheckLabels(logits, labels);
  double sum = 0.0;
  long long count = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == kIgnoreLabel) continue;
    sum += LogSumExp(logits.row(i)) - logits(i, y);
    ++count;
  }
  Require(count > 0, "cross_entropy_loss: every voxel is ignored");
  return sum / static_cast<double>(count);
}

Mat CrossEntropyLossBackward(const Mat& logits, std::span<const int> labels, double d_loss) {
  CheckLabels(logits, labels);
  const auto count = std::count_if(labels.begin(), labels.end(), [](int y) { return y != kIgnoreLabel; });
  Require(count > 0, "cross_entropy_loss: every voxel is ignored");
  Mat d = SoftmaxRows(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == kIgnoreLabel) {
      d.row(i).setZero();
    } else {
      d(i, y) -= 1.0;
    }
  }
  return d * (d_loss / static_cast<double>(count));
}

namespace {

// Shared forward/backward for the affinity losses. When d_probs is non-null
// the gradient w.r.t. the class probabilities is accumulated into it.
ScalLosses ScalCore(const Mat& probs, std::span<const int> labels, double d_sem, double d_geo, Mat* d_probs) {
  const Eigen::Index voxels = probs.rows();
  const Eigen::Index classes = probs.cols();
  ScalLosses out;

  int counted = 0;
  double sem_sum = 0.0;
  struct ClassTerms {
    int cls;
    double inter, pred_mass, neg_mass;
    long long support, complement;
  };
  std::vector<ClassTerms> terms;
  for (Eigen::Index c = 0; c < classes; ++c) {
    ClassTerms t{static_cast<int>(c), 0.0, 0.0, 0.0, 0, 0};
    for (Eigen::Index i = 0; i < voxels; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      if (y == kIgnoreLabel) continue;
      const double p = probs(i, c);
      t.pred_mass += p;
      if (y == c) {
        t.inter += p;
        ++t.support;
      } else {
        t.neg_mass += 1.0 - p;
        ++t.complement;
      }
    }
    if (t.support == 0) continue;
    ++counted;
    double loss = NegLogFloored(t.pred_mass > 0.0 ? t.inter / t.pred_mass : 0.0);
    loss += NegLogFloored(t.inter / static_cast<double>(t.support));
    if (t.complement > 0) loss += NegLogFloored(t.neg_mass / static_cast<double>(t.complement));
    sem_sum += loss;
    terms.push_back(t);
  }
  out.semantic = counted > 0 ? sem_sum / counted : 0.0;

  if (d_probs != nullptr && counted > 0) {
    const double scale = d_sem / counted;
    for (const auto& t : terms) {
      const double precision = t.pred_mass > 0.0 ? t.inter / t.pred_mass : 0.0;
      const double recall = t.inter / static_cast<double>(t.support);
      const double specificity = t.complement > 0 ? t.neg_mass / static_cast<double>(t.complement) : 1.0;
      const bool use_p = precision >= kLogFloor;
      const bool use_r = recall >= kLogFloor;
      const bool use_s = t.complement > 0 && specificity >= kLogFloor;
      for (Eigen::Index i = 0; i < voxels; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y == kIgnoreLabel) continue;
        double g = 0.0;
        if (use_p) g += 1.0 / t.pred_mass - (y == t.cls ? 1.0 / t.inter : 0.0);
        if (use_r && y == t.cls) g -= 1.0 / t.inter;
        if (use_s && y != t.cls) g += 1.0 / t.neg_mass;
        (*d_probs)(i, t.cls) += scale * g;
      }
    }
  }

  // Geometric: occupied probability q = 1 - p_empty against occupied targets.
  double inter = 0.0, occ_mass = 0.0, empty_mass = 0.0;
  long long occupied = 0, empty = 0;
  for (Eigen::Index i = 0; i < voxels; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == kIgnoreLabel) continue;
    const double q = 1.0 - probs(i, kEmptyLabel);
    occ_mass += q;
    if (y != kEmptyLabel) {
      inter += q;
      ++occupied;
    } else {
      empty_mass += 1.0 - q;
      ++empty;
    }
  }
  if (occupied > 0) {
    const double precision = occ_mass > 0.0 ? inter / occ_mass : 0.0;
    const double recall = inter / static_cast<double>(occupied);
    const double specificity = empty > 0 ? empty_mass / static_cast<double>(empty) : 1.0;
    out.geometric = NegLogFloored(precision) + NegLogFloored(recall);
    if (empty > 0) out.geometric += NegLogFloored(specificity);
    if (d_probs != nullptr) {
      const bool use_p = precision >= kLogFloor;
      const bool use_r = recall >= kLogFloor;
      const bool use_s = empty > 0 && specificity >= kLogFloor;
      for (Eigen::Index i = 0; i < voxels; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y == kIgnoreLabel) continue;
        double d_q = 0.0;
        if (use_p) d_q += 1.0 / occ_mass - (y != kEmptyLabel ? 1.0 / inter : 0.0);
        if (use_r && y != kEmptyLabel) d_q -= 1.0 / inter;
        double d_empty = -d_q;
        if (use_s && y == kEmptyLabel) d_empty -= 1.0 / empty_mass;
        (*d_probs)(i, kEmptyLabel) += d_geo * d_empty;
      }
    }
  }
  return out;
}

}  // namespace

ScalLosses ComputeScalLosses(const Mat& logits, std::span<const int> labels) {
  CheckLabels(logits, labels);
  return ScalCore(SoftmaxRows(logits), labels, 0.0, 0.0, nullptr);
}

Mat ScalLossesBackward(const Mat& logits, std::span<const int> labels, double d_semantic, double d_geometric) {
  CheckLabels(logits, labels);
  const Mat probs = SoftmaxRows(logits);
  Mat d_probs = Mat::Zero(probs.rows(), probs.cols());
  ScalCore(probs, labels, d_semantic, d_geometric, &d_probs);
  return SoftmaxRowsBackward(probs, d_probs);
}

namespace {

bool ValidDepth(double d) { return std::isfinite(d) && d > 0.0; }

void CheckDepthInputs(const FeatureMap& pred_dist, const FeatureMap& gt_depth, const DepthBinning& binning) {
  Require(pred_dist.SameSpatial(gt_depth) && gt_depth.channels() == 1, "depth_loss: shape mismatch");
  Require(pred_dist.channels() == binning.num_bins, "depth_loss: distribution width != bins");
}

}  // namespace

double DepthLoss(const FeatureMap& pred_dist, const FeatureMap& gt_depth, const DepthBinning& binning) {
  CheckDepthInputs(pred_dist, gt_depth, binning);
  double sum = 0.0;
  long long count = 0;
  for (Eigen::Index p = 0; p < gt_depth.data.rows(); ++p) {
    const double d = gt_depth.data(p, 0);
    if (!ValidDepth(d)) continue;
    sum += NegLogFloored(pred_dist.data(p, DepthToBin(d, binning)));
    ++count;
  }
  Require(count > 0, "depth_loss: no valid depth pixels");
  return sum / static_cast<double>(count);
}

Mat DepthLossBackward(const FeatureMap& pred_dist, const FeatureMap& gt_depth, const DepthBinning& binning,
                      double d_loss) {
  CheckDepthInputs(pred_dist, gt_depth, binning);
  Mat d = Mat::Zero(pred_dist.data.rows(), pred_dist.data.cols());
  long long count = 0;
  for (Eigen::Index p = 0; p < gt_depth.data.rows(); ++p) count += ValidDepth(gt_depth.data(p, 0));
  Require(count > 0, "depth_loss: no valid depth pixels");
  for (Eigen::Index p = 0; p < gt_depth.data.rows(); ++p) {
    const double depth = gt_depth.data(p, 0);
    if (!ValidDepth(depth)) continue;
    const int bin = DepthToBin(depth, binning);
    const double prob = pred_dist.data(p, bin);
    if (prob >= kLogFloor) d(p, bin) = -d_loss / (prob * static_cast<double>(count));
  }
  return d;
}

LossReport TotalLoss(const LossComponents& components, const LossWeights& weights) {
  const auto& c = components;
  if (!std::isfinite(c.ce) || !std::isfinite(c.scal_sem) || !std::isfinite(c.scal_geo) || !std::isfinite(c.depth) ||
      !std::isfinite(c.recon)) {
    throw NumericalError("total_loss: non-finite loss component");
  }
  LossReport r;
  r.components = components;
  r.weights = weights;
  r.total = weights.depth * components.depth + weights.recon * components.recon + components.ce +
            components.scal_geo + components.scal_sem;
  return r;
}

MetricReport IouMiou(std::span<const int> pred, std::span<const int> gt, int num_semantic_classes) {
  Require(pred.size() == gt.size(), "iou_miou: prediction and ground truth sizes differ");
  Require(num_semantic_classes >= 1, "iou_miou: at least one semantic class required");
  auto check = [&](int y) {
    Require(y == kIgnoreLabel || (y >= 0 && y <= num_semantic_classes), "iou_miou: label out of range");
  };
  MetricReport r;
  r.per_class.resize(static_cast<std::size_t>(num_semantic_classes));
  for (int c = 0; c < num_semantic_classes; ++c) r.per_class[static_cast<std::size_t>(c)].label = c + 1;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check(pred[i]);
    check(gt[i]);
    if (pred[i] == kIgnoreLabel || gt[i] == kIgnoreLabel) continue;
    const bool p_occ = pred[i] != kEmptyLabel;
    const bool g_occ = gt[i] != kEmptyLabel;
    r.tp += p_occ && g_occ;
    r.fp += p_occ && !g_occ;
    r.fn += !p_occ && g_occ;
    if (pred[i] == gt[i]) {
      if (p_occ) ++r.per_class[static_cast<std::size_t>(pred[i] - 1)].tp;
    } else {
      if (p_occ) ++r.per_class[static_cast<std::size_t>(pred[i] - 1)].fp;
      if (g_occ) ++r.per_class[static_cast<std::size_t>(gt[i] - 1)].fn;
    }
  }
  const long long geo_union = r.tp + r.fp + r.fn;
  r.iou = geo_union > 0 ? static_cast<double>(r.tp) / static_cast<double>(geo_union) : 1.0;
  double sum = 0.0;
  int present = 0;
  for (auto& c : r.per_class) {
    const long long u = c.tp + c.fp + c.fn;
    if (u == 0) continue;
    c.iou = static_cast<double>(c.tp) / static_cast<double>(u);
    sum += *c.iou;
    ++present;
  }
  r.miou = present > 0 ? sum / present : 1.0;
  return r;
}

std::vector<int> ArgmaxLabels(const Mat& logits) {
  std::vector<int> labels(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace ocean
