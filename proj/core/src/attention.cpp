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

#include "ocean/attention.hpp"

#include <algorithm>
#include <cmath>

namespace ocean {

Mat KernelPhi(const Mat& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v + 1.0 : std::exp(v); });
}

Mat KernelPhiBackward(const Mat& x, const Mat& d_y) {
  return d_y.binaryExpr(x, [](double g, double v) { return v > 0.0 ? g : g * std::exp(v); });
}

namespace {

Mat GatherRows(const Mat& src, std::span<const int> rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
  return out;
}

void ScatterAddRows(const Mat& src, std::span<const int> rows, Mat* dst) {
  for (std::size_t r = 0; r < rows.size(); ++r) dst->row(rows[r]) += src.row(static_cast<Eigen::Index>(r));
}

void CheckClusterShapes(const Mat& q, const Mat& k, const Mat& v) {
  Require(k.rows() == v.rows(), "cluster attention: key and value row counts differ");
  Require(k.rows() == 0 || q.cols() == k.cols(), "cluster attention: query and key widths differ");
}

bool AllOnes(const Mat& a) { return (a.array() == 1.0).all(); }

}  // namespace

Mat SgaCluster(const Mat& q, const Mat& k, const Mat& v, std::vector<double>* denominators) {
  CheckClusterShapes(q, k, v);
  if (k.rows() == 0) {
    if (denominators != nullptr) denominators->clear();
    return q;
  }
  const Mat phi_q = KernelPhi(q);
  const Mat phi_k = KernelPhi(k);
  const Mat kv = phi_k.transpose() * v;           // C x Cv
  const Vec k_sum = phi_k.colwise().sum().transpose();  // C
  const Vec den = phi_q * k_sum;
  Mat out = phi_q * kv;
  out.array().colwise() /= den.array();
  if (denominators != nullptr) denominators->assign(den.data(), den.data() + den.size());
  return out;
}

SgaGradients SgaClusterBackward(const Mat& q, const Mat& k, const Mat& v, const Mat& d_out) {
  CheckClusterShapes(q, k, v);
  SgaGradients g;
  if (k.rows() == 0) {
    g.d_q = d_out;
    g.d_k = Mat::Zero(0, q.cols());
    g.d_v = Mat::Zero(0, v.cols());
    return g;
  }
  const Mat phi_q = KernelPhi(q);
  const Mat phi_k = KernelPhi(k);
  const Mat kv = phi_k.transpose() * v;
  const Vec k_sum = phi_k.colwise().sum().transpose();
  const Vec den = phi_q * k_sum;
  Mat out = phi_q * kv;
  out.array().colwise() /= den.array();

  Mat d_num = d_out;
  d_num.array().colwise() /= den.array();
  const Vec d_den = -(d_out.cwiseProduct(out).rowwise().sum()).cwiseQuotient(den);

  const Mat d_phi_q = d_num * kv.transpose() + d_den * k_sum.transpose();
  const Mat d_kv = phi_q.transpose() * d_num;
  const RowVec d_k_sum = d_den.transpose() * phi_q;
  Mat d_phi_k = v * d_kv.transpose();
  d_phi_k.rowwise() += d_k_sum;

  g.d_q = KernelPhiBackward(q, d_phi_q);
  g.d_k = KernelPhiBackward(k, d_phi_k);
  g.d_v = phi_k * d_kv;
  return g;
}

Mat DepthSimilarity(std::span<const double> proposal_depths, const Mat& pixel_dists,
                    const DepthBinning& binning) {
  Require(pixel_dists.cols() == binning.num_bins, "depth_similarity: distribution width != bin count");
  Mat a(static_cast<Eigen::Index>(proposal_depths.size()), pixel_dists.rows());
  for (std::size_t i = 0; i < proposal_depths.size(); ++i) {
    const int bin = DepthToBin(proposal_depths[i], binning);
    a.row(static_cast<Eigen::Index>(i)) = pixel_dists.col(bin).transpose();
  }
  return a;
}

Mat Sga3dCluster(const Mat& q, const Mat& k, const Mat& v, const Mat& a, DenominatorMode mode,
                 std::vector<double>* denominators) {
  CheckClusterShapes(q, k, v);
  Require(a.rows() == q.rows() && a.cols() == k.rows(), "sga3d: similarity matrix must be m x n");
  if (k.rows() == 0 || AllOnes(a)) return SgaCluster(q, k, v, denominators);

  const Mat kernel = KernelPhi(q) * KernelPhi(k).transpose();  // m x n
  const Mat weighted = a.cwiseProduct(kernel);
  Vec den = mode == DenominatorMode::kUnweighted ? Vec(kernel.rowwise().sum())
                                                 : Vec(weighted.rowwise().sum());
  if (mode == DenominatorMode::kWeighted) den = den.cwiseMax(kWeightedDenominatorFloor);
  Mat out = weighted * v;
  out.array().colwise() /= den.array();
  if (denominators != nullptr) denominators->assign(den.data(), den.data() + den.size());
  return out;
}

Sga3dGradients Sga3dClusterBackward(const Mat& q, const Mat& k, const Mat& v, const Mat& a,
                                    DenominatorMode mode, const Mat& d_out) {
  CheckClusterShapes(q, k, v);
  Require(a.rows() == q.rows() && a.cols() == k.rows(), "sga3d: similarity matrix must be m x n");
  Sga3dGradients g;
  if (k.rows() == 0) {
    g.d_q = d_out;
    g.d_k = Mat::Zero(0, q.cols());
    g.d_v = Mat::Zero(0, v.cols());
    g.d_a = Mat::Zero(q.rows(), 0);
    return g;
  }
  const Mat phi_q = KernelPhi(q);
  const Mat phi_k = KernelPhi(k);
  const Mat kernel = phi_q * phi_k.transpose();
  const Mat weighted = a.cwiseProduct(kernel);
  const bool weighted_den = mode == DenominatorMode::kWeighted;
  const Vec raw_den = weighted_den ? Vec(weighted.rowwise().sum()) : Vec(kernel.rowwise().sum());
  const Vec den = weighted_den ? Vec(raw_den.cwiseMax(kWeightedDenominatorFloor)) : raw_den;
  Mat out = weighted * v;
  out.array().colwise() /= den.array();

  Mat d_num = d_out;
  d_num.array().colwise() /= den.array();
  Vec d_den = -(d_out.cwiseProduct(out).rowwise().sum()).cwiseQuotient(den);
  if (weighted_den) {
    for (Eigen::Index i = 0; i < d_den.size(); ++i) {
      if (raw_den(i) < kWeightedDenominatorFloor) d_den(i) = 0.0;
    }
  }

  Mat d_weighted = d_num * v.transpose();
  g.d_v = weighted.transpose() * d_num;
  Mat d_kernel;
  if (weighted_den) {
    d_weighted.colwise() += d_den;
    d_kernel = a.cwiseProduct(d_weighted);
  } else {
    d_kernel = a.cwiseProduct(d_weighted);
    d_kernel.colwise() += d_den;
  }
  g.d_a = kernel.cwiseProduct(d_weighted);
  g.d_q = KernelPhiBackward(q, d_kernel * phi_k);
  g.d_k = KernelPhiBackward(k, d_kernel.transpose() * phi_q);
  return g;
}

namespace {

void CheckRunInputs(const InstanceClustering& clustering, const Mat& queries,
                    std::span<const double> proposal_depths, std::span<const ScaleAttentionInputs> scales,
                    const DepthBinning& binning) {
  Require(scales.size() == clustering.scales.size(), "run_sga3d: one input set per clustering scale");
  Require(static_cast<Eigen::Index>(proposal_depths.size()) == queries.rows(),
          "run_sga3d: one depth per proposal required");
  for (const auto& s : scales) {
    Require(s.keys.rows() == s.values.rows() && s.keys.rows() == s.depth_dist.rows(),
            "run_sga3d: keys, values and depth distributions must share pixel rows");
    Require(s.depth_dist.cols() == binning.num_bins, "run_sga3d: depth distribution width != bins");
  }
  for (const auto& c : clustering.clusters) {
    for (int p : c.proposals) Require(p >= 0 && p < queries.rows(), "run_sga3d: proposal index out of range");
  }
}

std::vector<double> GatherDepths(std::span<const double> depths, std::span<const int> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(depths[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace

Mat RunSga3d(const InstanceClustering& clustering, const Mat& queries, std::span<const double> proposal_depths,
             std::span<const ScaleAttentionInputs> scales, const DepthBinning& binning,
             const Sga3dOptions& options) {
  CheckRunInputs(clustering, queries, proposal_depths, scales, binning);
  const Eigen::Index width = scales.empty() ? queries.cols() : scales.front().values.cols();
  Mat residual = Mat::Zero(queries.rows(), width);
  for (const auto& cluster : clustering.clusters) {
    if (cluster.proposals.empty()) continue;
    const Mat q = GatherRows(queries, cluster.proposals);
    const std::vector<double> depths = GatherDepths(proposal_depths, cluster.proposals);
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const auto& pixels = cluster.pixels[s];
      if (pixels.empty()) continue;
      const Mat a = DepthSimilarity(depths, GatherRows(scales[s].depth_dist, pixels), binning);
      std::vector<double> den;
      const Mat out = Sga3dCluster(q, GatherRows(scales[s].keys, pixels), GatherRows(scales[s].values, pixels), a,
                                   options.mode, options.debug_denominators != nullptr ? &den : nullptr);
      if (options.debug_denominators != nullptr) options.debug_denominators->push_back(std::move(den));
      ScatterAddRows(out, cluster.proposals, &residual);
    }
  }
  return residual;
}

RunSga3dGradients RunSga3dBackward(const InstanceClustering& clustering, const Mat& queries,
                                   std::span<const double> proposal_depths,
                                   std::span<const ScaleAttentionInputs> scales, const DepthBinning& binning,
                                   DenominatorMode mode, const Mat& d_residual) {
  CheckRunInputs(clustering, queries, proposal_depths, scales, binning);
  RunSga3dGradients g;
  g.d_queries = Mat::Zero(queries.rows(), queries.cols());
  for (const auto& s : scales) {
    g.d_keys.push_back(Mat::Zero(s.keys.rows(), s.keys.cols()));
    g.d_values.push_back(Mat::Zero(s.values.rows(), s.values.cols()));
    g.d_depth_dist.push_back(Mat::Zero(s.depth_dist.rows(), s.depth_dist.cols()));
  }
  for (const auto& cluster : clustering.clusters) {
    if (cluster.proposals.empty()) continue;
    const Mat q = GatherRows(queries, cluster.proposals);
    const Mat d_out = GatherRows(d_residual, cluster.proposals);
    const std::vector<double> depths = GatherDepths(proposal_depths, cluster.proposals);
    std::vector<int> bins;
    for (double d : depths) bins.push_back(DepthToBin(d, binning));
    for (std::size_t s = 0; s < scales.size(); ++s) {
      const auto& pixels = cluster.pixels[s];
      if (pixels.empty()) continue;
      const Mat a = DepthSimilarity(depths, GatherRows(scales[s].depth_dist, pixels), binning);
      const Sga3dGradients cg = Sga3dClusterBackward(q, GatherRows(scales[s].keys, pixels),
                                                     GatherRows(scales[s].values, pixels), a, mode, d_out);
      ScatterAddRows(cg.d_q, cluster.proposals, &g.d_queries);
      ScatterAddRows(cg.d_k, pixels, &g.d_keys[s]);
      ScatterAddRows(cg.d_v, pixels, &g.d_values[s]);
      for (std::size_t i = 0; i < bins.size(); ++i) {
        for (std::size_t p = 0; p < pixels.size(); ++p) {
          g.d_depth_dist[s](pixels[p], bins[i]) += cg.d_a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p));
        }
      }
    }
  }
  return g;
}

namespace {

struct BilinearStencil {
  Eigen::Index r00, r01, r10, r11;
  double fx, fy;
  bool clamped_x, clamped_y;
};

BilinearStencil MakeStencil(const FeatureMap& map, const Vec2& p) {
  Require(map.height >= 1 && map.width >= 1, "bilinear_sample: empty feature map");
  if (!p.allFinite()) throw NumericalError("bilinear_sample: non-finite sampling position");
  const double max_x = map.width - 1;
  const double max_y = map.height - 1;
  BilinearStencil s{};
  s.clamped_x = p.x() < 0.0 || p.x() > max_x;
  s.clamped_y = p.y() < 0.0 || p.y() > max_y;
  const double x = std::clamp(p.x(), 0.0, max_x);
  const double y = std::clamp(p.y(), 0.0, max_y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  s.fx = x - x0;
  s.fy = y - y0;
  s.r00 = map.index(y0, x0);
  s.r01 = map.index(y0, x1);
  s.r10 = map.index(y1, x0);
  s.r11 = map.index(y1, x1);
  return s;
}

}  // namespace

RowVec BilinearSample(const FeatureMap& map, const Vec2& p) {
  const BilinearStencil s = MakeStencil(map, p);
  const auto& d = map.data;
  return (1.0 - s.fy) * ((1.0 - s.fx) * d.row(s.r00) + s.fx * d.row(s.r01)) +
         s.fy * ((1.0 - s.fx) * d.row(s.r10) + s.fx * d.row(s.r11));
}

Vec2 BilinearSampleBackward(const FeatureMap& map, const Vec2& p, const RowVec& d_out, FeatureMap* d_map) {
  const BilinearStencil s = MakeStencil(map, p);
  if (d_map != nullptr) {
    d_map->data.row(s.r00) += (1.0 - s.fy) * (1.0 - s.fx) * d_out;
    d_map->data.row(s.r01) += (1.0 - s.fy) * s.fx * d_out;
    d_map->data.row(s.r10) += s.fy * (1.0 - s.fx) * d_out;
    d_map->data.row(s.r11) += s.fy * s.fx * d_out;
  }
  const auto& d = map.data;
  Vec2 d_p = Vec2::Zero();
  if (!s.clamped_x) {
    d_p.x() = d_out.dot((1.0 - s.fy) * (d.row(s.r01) - d.row(s.r00)) + s.fy * (d.row(s.r11) - d.row(s.r10)));
  }
  if (!s.clamped_y) {
    d_p.y() = d_out.dot((1.0 - s.fx) * (d.row(s.r10) - d.row(s.r00)) + s.fx * (d.row(s.r11) - d.row(s.r01)));
  }
  return d_p;
}

GsgaParams GsgaParams::ZerosLike() const {
  GsgaParams z;
  z.projection = Mat::Zero(projection.rows(), projection.cols());
  z.offsets = offsets.ZerosLike();
  z.weights = weights.ZerosLike();
  z.gate = Mat::Zero(gate.rows(), gate.cols());
  z.gate_bias = Mat::Zero(gate_bias.rows(), gate_bias.cols());
  z.gate_bypass = gate_bypass;
  return z;
}

namespace {

void CheckGsgaInputs(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image,
                     const FeatureMap& sam, const GsgaParams& params) {
  Require(image.SameSpatial(sam), "gsga: image and sam features must share spatial dims");
  Require(static_cast<Eigen::Index>(positions.size()) == queries.rows(), "gsga: one position per query");
  Require(queries.cols() == params.channels(), "gsga: query width != projection rows");
  Require(params.projection.cols() == image.channels(), "gsga: projection width != image channels");
  Require(params.offsets.out_features() == 2 * params.num_points() && params.offsets.in_features() == queries.cols(),
          "gsga: offset head must map C -> 2K");
  Require(params.weights.in_features() == queries.cols(), "gsga: weight head must map C -> K");
  Require(params.gate.rows() == queries.cols() && params.gate.cols() == sam.channels(),
          "gsga: gate projection must map C_sam -> C");
  Require(params.gate_bias.size() == 1, "gsga: gate bias must be a scalar");
}

}  // namespace

Mat Gsga(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image, const FeatureMap& sam,
         const GsgaParams& params) {
  CheckGsgaInputs(queries, positions, image, sam, params);
  const int points = params.num_points();
  const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  const Mat offsets = LinearForward(params.offsets, queries);
  const Mat attn = SoftmaxRows(LinearForward(params.weights, queries));
  Mat aggregated = Mat::Zero(queries.rows(), image.channels());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    for (int k = 0; k < points; ++k) {
      const Vec2 p = positions[static_cast<std::size_t>(i)] + Vec2(offsets(i, 2 * k), offsets(i, 2 * k + 1));
      double gate = 1.0;
      if (!params.gate_bypass) {
        const RowVec g = BilinearSample(sam, p) * params.gate.transpose();
        gate = Sigmoid(queries.row(i).dot(g) * scale + params.gate_bias(0, 0));
      }
      aggregated.row(i) += gate * attn(i, k) * BilinearSample(image, p);
    }
  }
  return aggregated * params.projection.transpose();
}

GsgaGradients GsgaBackward(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image,
                           const FeatureMap& sam, const GsgaParams& params, const Mat& d_out) {
  CheckGsgaInputs(queries, positions, image, sam, params);
  const int points = params.num_points();
  const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  const Mat offsets = LinearForward(params.offsets, queries);
  const Mat attn = SoftmaxRows(LinearForward(params.weights, queries));

  GsgaGradients g;
  g.d_queries = Mat::Zero(queries.rows(), queries.cols());
  g.d_positions.assign(positions.size(), Vec2::Zero());
  g.d_image = FeatureMap(image.height, image.width, image.channels());
  g.d_sam = FeatureMap(sam.height, sam.width, sam.channels());
  g.d_params = params.ZerosLike();

  Mat d_offsets = Mat::Zero(offsets.rows(), offsets.cols());
  Mat d_attn = Mat::Zero(attn.rows(), attn.cols());
  const Mat d_aggregated = d_out * params.projection;  // N x C_img

  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    RowVec aggregated = RowVec::Zero(image.channels());
    for (int k = 0; k < points; ++k) {
      const Vec2 p = positions[static_cast<std::size_t>(i)] + Vec2(offsets(i, 2 * k), offsets(i, 2 * k + 1));
      const RowVec f = BilinearSample(image, p);
      double gate = 1.0;
      RowVec s, gproj;
      if (!params.gate_bypass) {
        s = BilinearSample(sam, p);
        gproj = s * params.gate.transpose();
        gate = Sigmoid(queries.row(i).dot(gproj) * scale + params.gate_bias(0, 0));
      }
      aggregated += gate * attn(i, k) * f;

      const double f_dot = d_aggregated.row(i).dot(f);
      d_attn(i, k) = gate * f_dot;
      Vec2 d_p = BilinearSampleBackward(image, p, gate * attn(i, k) * d_aggregated.row(i), &g.d_image);
      if (!params.gate_bypass) {
        const double d_logit = attn(i, k) * f_dot * gate * (1.0 - gate);
        g.d_queries.row(i) += d_logit * scale * gproj;
        g.d_params.gate_bias(0, 0) += d_logit;
        const RowVec d_gproj = d_logit * scale * queries.row(i);
        g.d_params.gate.noalias() += d_gproj.transpose() * s;
        d_p += BilinearSampleBackward(sam, p, d_gproj * params.gate, &g.d_sam);
      }
      g.d_positions[static_cast<std::size_t>(i)] += d_p;
      d_offsets(i, 2 * k) = d_p.x();
      d_offsets(i, 2 * k + 1) = d_p.y();
    }
    g.d_params.projection.noalias() += d_out.row(i).transpose() * aggregated;
  }
  const Mat d_logits = SoftmaxRowsBackward(attn, d_attn);
  g.d_queries += LinearBackward(params.weights, queries, d_logits, &g.d_params.weights);
  g.d_queries += LinearBackward(params.offsets, queries, d_offsets, &g.d_params.offsets);
  return g;
}

namespace {

std::vector<Eigen::Index> WindowCells(const BevMap& map, int window, int wx, int wy) {
  std::vector<Eigen::Index> cells;
  cells.reserve(static_cast<std::size_t>(window) * window);
  for (int dx = 0; dx < window; ++dx) {
    for (int dy = 0; dy < window; ++dy) cells.push_back(map.index(wx * window + dx, wy * window + dy));
  }
  return cells;
}

void CheckWindowInputs(const BevMap& query, const BevMap& kv, int window) {
  Require(window >= 1, "window_attention: window must be >= 1");
  Require(query.nx == kv.nx && query.ny == kv.ny, "window_attention: query and kv dims differ");
  Require(query.channels() == kv.channels(), "window_attention: query and kv widths differ");
  Require(query.nx % window == 0 && query.ny % window == 0, "window_attention: dims not divisible by window");
}

Mat Gather(const Mat& src, const std::vector<Eigen::Index>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
  return out;
}

}  // namespace

BevMap WindowAttention(const BevMap& query, const BevMap& kv, int window) {
  CheckWindowInputs(query, kv, window);
  BevMap out(query.nx, query.ny, kv.channels());
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.channels()));
  for (int wx = 0; wx < query.nx / window; ++wx) {
    for (int wy = 0; wy < query.ny / window; ++wy) {
      const auto cells = WindowCells(query, window, wx, wy);
      const Mat q = Gather(query.data, cells);
      const Mat v = Gather(kv.data, cells);
      const Mat attn = SoftmaxRows(q * v.transpose() * scale);
      const Mat o = attn * v;
      for (std::size_t r = 0; r < cells.size(); ++r) out.data.row(cells[r]) = o.row(static_cast<Eigen::Index>(r));
    }
  }
  return out;
}

WindowAttentionGradients WindowAttentionBackward(const BevMap& query, const BevMap& kv, int window,
                                                 const BevMap& d_out) {
  CheckWindowInputs(query, kv, window);
  WindowAttentionGradients g{BevMap(query.nx, query.ny, query.channels()), BevMap(kv.nx, kv.ny, kv.channels())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(query.channels()));
  for (int wx = 0; wx < query.nx / window; ++wx) {
    for (int wy = 0; wy < query.ny / window; ++wy) {
      const auto cells = WindowCells(query, window, wx, wy);
      const Mat q = Gather(query.data, cells);
      const Mat v = Gather(kv.data, cells);
      const Mat d_o = Gather(d_out.data, cells);
      const Mat attn = SoftmaxRows(q * v.transpose() * scale);
      const Mat d_attn = d_o * v.transpose();
      const Mat d_scores = SoftmaxRowsBackward(attn, d_attn) * scale;
      const Mat d_q = d_scores * v;
      const Mat d_v = attn.transpose() * d_o + d_scores.transpose() * q;
      for (std::size_t r = 0; r < cells.size(); ++r) {
        g.d_query.data.row(cells[r]) = d_q.row(static_cast<Eigen::Index>(r));
        g.d_kv.data.row(cells[r]) = d_v.row(static_cast<Eigen::Index>(r));
      }
    }
  }
  return g;
}

}  // namespace ocean
