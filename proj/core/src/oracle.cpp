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

#include "ocean/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace ocean {
namespace {

double Phi(double x) { return x > 0.0 ? x + 1.0 : std::exp(x); }

double PairKernel(const Mat& q, Eigen::Index i, const Mat& k, Eigen::Index p) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < q.cols(); ++c) s += Phi(q(i, c)) * Phi(k(p, c));
  return s;
}

double Logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Four-corner interpolation with border clamping, written out per channel.
double SampleChannel(const FeatureMap& map, double x, double y, Eigen::Index channel) {
  x = std::min(std::max(x, 0.0), static_cast<double>(map.width - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(map.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  double value = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int xi = std::min(x0 + dx, map.width - 1);
      const int yi = std::min(y0 + dy, map.height - 1);
      const double wx = dx == 0 ? 1.0 - (x - x0) : x - x0;
      const double wy = dy == 0 ? 1.0 - (y - y0) : y - y0;
      value += wx * wy * map.data(static_cast<Eigen::Index>(yi) * map.width + xi, channel);
    }
  }
  return value;
}

}  // namespace

Mat SgaPairwise(const Mat& q, const Mat& k, const Mat& v) {
  if (k.rows() == 0) return q;
  Mat out = Mat::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double den = 0.0;
    for (Eigen::Index p = 0; p < k.rows(); ++p) {
      const double w = PairKernel(q, i, k, p);
      den += w;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w * v(p, c);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= den;
  }
  return out;
}

Mat Sga3dPairwise(const Mat& q, const Mat& k, const Mat& v, const Mat& a, DenominatorMode mode) {
  if (k.rows() == 0) return q;
  Mat out = Mat::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double den = 0.0;
    for (Eigen::Index p = 0; p < k.rows(); ++p) {
      const double w = PairKernel(q, i, k, p);
      den += mode == DenominatorMode::kWeighted ? a(i, p) * w : w;
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += a(i, p) * w * v(p, c);
    }
    if (mode == DenominatorMode::kWeighted) den = std::max(den, kWeightedDenominatorFloor);
    for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) /= den;
  }
  return out;
}

Mat GsgaDense(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image, const FeatureMap& sam,
              const GsgaParams& params) {
  const Eigen::Index n = queries.rows();
  const Eigen::Index c = queries.cols();
  const int points = params.num_points();
  Mat out = Mat::Zero(n, params.projection.rows());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> logits(static_cast<std::size_t>(points));
    double max_logit = -INFINITY;
    for (int k = 0; k < points; ++k) {
      double s = params.weights.bias(0, k);
      for (Eigen::Index j = 0; j < c; ++j) s += params.weights.weight(k, j) * queries(i, j);
      logits[static_cast<std::size_t>(k)] = s;
      max_logit = std::max(max_logit, s);
    }
    double norm = 0.0;
    for (double& l : logits) norm += (l = std::exp(l - max_logit));
    for (int k = 0; k < points; ++k) {
      double ox = params.offsets.bias(0, 2 * k);
      double oy = params.offsets.bias(0, 2 * k + 1);
      for (Eigen::Index j = 0; j < c; ++j) {
        ox += params.offsets.weight(2 * k, j) * queries(i, j);
        oy += params.offsets.weight(2 * k + 1, j) * queries(i, j);
      }
      const double x = positions[static_cast<std::size_t>(i)].x() + ox;
      const double y = positions[static_cast<std::size_t>(i)].y() + oy;
      double gate = 1.0;
      if (!params.gate_bypass) {
        double score = 0.0;
        for (Eigen::Index a = 0; a < c; ++a) {
          double projected = 0.0;
          for (Eigen::Index b = 0; b < params.gate.cols(); ++b) {
            projected += params.gate(a, b) * SampleChannel(sam, x, y, b);
          }
          score += queries(i, a) * projected;
        }
        gate = Logistic(score / std::sqrt(static_cast<double>(c)) + params.gate_bias(0, 0));
      }
      const double weight = gate * logits[static_cast<std::size_t>(k)] / norm;
      for (Eigen::Index o = 0; o < params.projection.rows(); ++o) {
        double projected = 0.0;
        for (Eigen::Index b = 0; b < params.projection.cols(); ++b) {
          projected += params.projection(o, b) * SampleChannel(image, x, y, b);
        }
        out(i, o) += weight * projected;
      }
    }
  }
  return out;
}

BevMap WindowAttentionDense(const BevMap& query, const BevMap& kv, int window) {
  const Eigen::Index cells = static_cast<Eigen::Index>(query.nx) * query.ny;
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.channels()));
  BevMap out(query.nx, query.ny, kv.channels());
  for (Eigen::Index a = 0; a < cells; ++a) {
    const int ax = static_cast<int>(a / query.ny);
    const int ay = static_cast<int>(a % query.ny);
    std::vector<double> scores(static_cast<std::size_t>(cells), -INFINITY);
    double max_score = -INFINITY;
    for (Eigen::Index b = 0; b < cells; ++b) {
      const int bx = static_cast<int>(b / query.ny);
      const int by = static_cast<int>(b % query.ny);
      if (ax / window != bx / window || ay / window != by / window) continue;
      double s = 0.0;
      for (Eigen::Index c = 0; c < query.channels(); ++c) s += query.data(a, c) * kv.data(b, c);
      scores[static_cast<std::size_t>(b)] = s * scale;
      max_score = std::max(max_score, s * scale);
    }
    double norm = 0.0;
    for (double& s : scores) norm += (s = std::exp(s - max_score));
    for (Eigen::Index b = 0; b < cells; ++b) {
      const double w = scores[static_cast<std::size_t>(b)] / norm;
      if (w == 0.0) continue;
      for (Eigen::Index c = 0; c < kv.channels(); ++c) out.data(a, c) += w * kv.data(b, c);
    }
  }
  return out;
}

}  // namespace ocean
