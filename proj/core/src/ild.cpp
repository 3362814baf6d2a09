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

#include "ocean/ild.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "ocean/attention.hpp"

namespace ocean {

InstanceFeatureSet PoolInstanceFeatures(const InstanceClustering& clustering,
                                        std::span<const Mat> pixel_features) {
  Require(pixel_features.size() == clustering.scales.size(), "pool_instance_features: one feature map per scale");
  const Eigen::Index width = pixel_features.empty() ? 0 : pixel_features.front().cols();
  for (const auto& f : pixel_features) {
    Require(f.cols() == width, "pool_instance_features: scales must share the channel width");
  }
  InstanceFeatureSet out;
  std::vector<RowVec> rows;
  for (const auto& cluster : clustering.clusters) {
    if (!cluster.HasPixels()) continue;
    RowVec sum = RowVec::Zero(width);
    for (std::size_t s = 0; s < pixel_features.size(); ++s) {
      for (int p : cluster.pixels[s]) sum += pixel_features[s].row(p);
    }
    out.ids.push_back(cluster.id);
    rows.push_back(std::move(sum));
  }
  out.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t l = 0; l < rows.size(); ++l) out.features.row(static_cast<Eigen::Index>(l)) = rows[l];
  return out;
}

std::vector<Mat> PoolInstanceFeaturesBackward(const InstanceClustering& clustering,
                                              std::span<const Mat> pixel_features,
                                              const InstanceFeatureSet& pooled, const Mat& d_features) {
  std::vector<Mat> grads;
  for (const auto& f : pixel_features) grads.push_back(Mat::Zero(f.rows(), f.cols()));
  for (std::size_t l = 0; l < pooled.ids.size(); ++l) {
    const Cluster* cluster = clustering.Find(pooled.ids[l]);
    Require(cluster != nullptr, "pool_instance_features backward: unknown instance id");
    for (std::size_t s = 0; s < grads.size(); ++s) {
      for (int p : cluster->pixels[s]) grads[s].row(p) += d_features.row(static_cast<Eigen::Index>(l));
    }
  }
  return grads;
}

DecoderLayout PlanDecoder(int nx, int ny) {
  Require(nx >= 4 && nx % 4 == 0, "decoder: BEV x extent must be a multiple of the 4-cell seed");
  int ratio = nx / 4;
  int layers = 0;
  while (ratio > 1) {
    Require(ratio % 2 == 0, "decoder: BEV x extent is not a power-of-two multiple of the seed");
    ratio /= 2;
    ++layers;
  }
  const int factor = 1 << layers;
  Require(ny >= factor && ny % factor == 0, "decoder: BEV y extent does not match the upsampling schedule");
  return {4, ny / factor, layers};
}

DecoderParams MakeDecoder(int channels, int nx, int ny) {
  Require(channels >= 1, "decoder: channel width must be positive");
  DecoderParams p;
  p.layout = PlanDecoder(nx, ny);
  const int seed_channels = p.layout.num_layers == 0 ? channels + 1 : channels;
  p.seed = Linear(channels, p.layout.seed_x * p.layout.seed_y * seed_channels);
  for (int l = 0; l < p.layout.num_layers; ++l) {
    const int out = l + 1 == p.layout.num_layers ? channels + 1 : channels;
    p.layers.push_back({Mat::Zero(4 * out, channels), Mat::Zero(1, out)});
  }
  return p;
}

DecoderParams DecoderParams::ZerosLike() const {
  DecoderParams z;
  z.layout = layout;
  z.seed = seed.ZerosLike();
  for (const auto& l : layers) z.layers.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Mat::Zero(1, l.bias.cols())});
  return z;
}

namespace {

Mat Upsample(const UpsampleLayer& layer, const Mat& in, int h, int w) {
  const int cout = layer.out_channels();
  const Mat y = in * layer.weight.transpose();  // (h*w) x 4*cout
  Mat out(static_cast<Eigen::Index>(4) * h * w, cout);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const Eigen::Index row = static_cast<Eigen::Index>(2 * i + a) * (2 * w) + (2 * j + b);
          out.row(row) = y.block(static_cast<Eigen::Index>(i) * w + j, (2 * a + b) * cout, 1, cout) + layer.bias;
        }
      }
    }
  }
  return out;
}

Mat UpsampleBackward(const UpsampleLayer& layer, const Mat& in, int h, int w, const Mat& d_out,
                     UpsampleLayer* grad) {
  const int cout = layer.out_channels();
  Mat d_y(static_cast<Eigen::Index>(h) * w, 4 * cout);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const Eigen::Index row = static_cast<Eigen::Index>(2 * i + a) * (2 * w) + (2 * j + b);
          d_y.block(static_cast<Eigen::Index>(i) * w + j, (2 * a + b) * cout, 1, cout) = d_out.row(row);
        }
      }
    }
  }
  grad->weight.noalias() += d_y.transpose() * in;
  grad->bias.row(0) += d_out.colwise().sum();
  return d_y * layer.weight;
}

// Pre-activation output of every stage; stage 0 is the seed map.
struct DecoderTrace {
  std::vector<Mat> pre;
  std::vector<Mat> post;
  std::vector<std::array<int, 2>> dims;
};

DecoderTrace RunDecoder(const RowVec& feature, const DecoderParams& params) {
  Require(feature.size() == params.channels(), "decoder: feature width mismatch");
  const auto& layout = params.layout;
  DecoderTrace t;
  const Mat seed = LinearForward(params.seed, Mat(feature));
  const Eigen::Index cells = static_cast<Eigen::Index>(layout.seed_x) * layout.seed_y;
  t.pre.push_back(Eigen::Map<const Mat>(seed.data(), cells, seed.size() / cells));
  t.dims.push_back({layout.seed_x, layout.seed_y});
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    t.post.push_back(Silu(t.pre.back()));
    const auto [h, w] = t.dims.back();
    t.pre.push_back(Upsample(params.layers[l], t.post.back(), h, w));
    t.dims.push_back({2 * h, 2 * w});
  }
  return t;
}

}  // namespace

DecodedBev DecodeInstanceBev(const RowVec& feature, const DecoderParams& params) {
  const DecoderTrace t = RunDecoder(feature, params);
  const Mat& out = t.pre.back();
  const int channels = params.channels();
  const auto [nx, ny] = t.dims.back();
  DecodedBev decoded{BevMap(nx, ny, channels), out.col(channels).mean()};
  decoded.map.data = out.leftCols(channels);
  return decoded;
}

RowVec DecodeInstanceBevBackward(const RowVec& feature, const DecoderParams& params, const BevMap& d_map,
                                 double d_alpha, DecoderParams* grad) {
  const DecoderTrace t = RunDecoder(feature, params);
  const int channels = params.channels();
  Mat d = Mat::Zero(t.pre.back().rows(), channels + 1);
  d.leftCols(channels) = d_map.data;
  d.col(channels).setConstant(d_alpha / static_cast<double>(d.rows()));
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto [h, w] = t.dims[l];
    const Mat d_post = UpsampleBackward(params.layers[l], t.post[l], h, w, d, &grad->layers[l]);
    d = SiluBackward(t.pre[l], d_post);
  }
  const Mat d_seed = Eigen::Map<const Mat>(d.data(), 1, d.size());
  return LinearBackward(params.seed, Mat(feature), d_seed, &grad->seed);
}

Mat DecisionLogits(const DecisionHead& head, const Mat& features) {
  return LinearForward(head.output, Silu(LinearForward(head.hidden, features)));
}

Mat DecisionLogitsBackward(const DecisionHead& head, const Mat& features, const Mat& d_logits,
                           DecisionHead* grad) {
  const Mat pre = LinearForward(head.hidden, features);
  const Mat d_hidden = LinearBackward(head.output, Silu(pre), d_logits, &grad->output);
  return LinearBackward(head.hidden, features, SiluBackward(pre, d_hidden), &grad->hidden);
}

Mat SampleGumbelNoise(Eigen::Index instances, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Mat noise(instances, 2);
  for (Eigen::Index l = 0; l < instances; ++l) {
    for (int c = 0; c < 2; ++c) {
      double u = uniform(rng);
      if (u <= 0.0) u = std::numeric_limits<double>::min();
      noise(l, c) = -std::log(-std::log(u));
    }
  }
  return noise;
}

DecisionVector GumbelDecision(const Mat& logits, const Mat& noise, double temperature, bool hard) {
  Require(temperature > 0.0, "gumbel_decision: temperature must be positive");
  Require(logits.cols() == 2 && noise.rows() == logits.rows() && noise.cols() == 2,
          "gumbel_decision: logits and noise must be L x 2");
  DecisionVector d;
  d.temperature = temperature;
  d.hard = hard;
  d.soft = SoftmaxRows((logits + noise) / temperature);
  d.z.resize(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index l = 0; l < logits.rows(); ++l) {
    d.z[static_cast<std::size_t>(l)] = hard ? (d.soft(l, 0) >= d.soft(l, 1) ? 1.0 : 0.0) : d.soft(l, 0);
  }
  return d;
}

DecisionVector GumbelDecision(const Mat& logits, double temperature, std::mt19937_64& rng) {
  return GumbelDecision(logits, SampleGumbelNoise(logits.rows(), rng), temperature, true);
}

Mat GumbelDecisionBackward(const DecisionVector& decision, std::span<const double> d_z) {
  Require(d_z.size() == decision.z.size(), "gumbel_decision backward: gradient size mismatch");
  Mat d_logits(decision.soft.rows(), 2);
  for (Eigen::Index l = 0; l < decision.soft.rows(); ++l) {
    const double y0 = decision.soft(l, 0);
    const double y1 = decision.soft(l, 1);
    const double g = d_z[static_cast<std::size_t>(l)] / decision.temperature;
    d_logits(l, 0) = g * y0 * (1.0 - y0);
    d_logits(l, 1) = -g * y0 * y1;
  }
  return d_logits;
}

namespace {

void CheckCombineInputs(std::span<const BevMap> maps, const Vec& alpha, std::span<const double> z) {
  Require(!maps.empty(), "combine_bev: at least one instance required");
  Require(alpha.size() == static_cast<Eigen::Index>(maps.size()) && z.size() == maps.size(),
          "combine_bev: alpha and Z must have one entry per instance");
  for (const auto& m : maps) {
    Require(m.nx == maps.front().nx && m.ny == maps.front().ny && m.channels() == maps.front().channels(),
            "combine_bev: instance maps must share dims");
  }
}

Vec SoftmaxVec(const Vec& x) {
  Vec e = (x.array() - x.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

CombinedBev CombineBev(std::span<const BevMap> maps, const Vec& alpha, std::span<const double> z, double epsilon) {
  CheckCombineInputs(maps, alpha, z);
  CombinedBev out;
  out.weights = SoftmaxVec(alpha);
  const Vec z_vec = Eigen::Map<const Vec>(z.data(), static_cast<Eigen::Index>(z.size()));
  const Vec selected = z_vec.cwiseProduct(out.weights);
  out.normalized = selected / (selected.sum() + epsilon);
  out.combined = BevMap(maps.front().nx, maps.front().ny, maps.front().channels());
  for (std::size_t l = 0; l < maps.size(); ++l) {
    out.combined.data += out.normalized(static_cast<Eigen::Index>(l)) * maps[l].data;
  }
  return out;
}

CombineGradients CombineBevBackward(std::span<const BevMap> maps, const Vec& alpha, std::span<const double> z,
                                    double epsilon, const BevMap& d_combined) {
  CheckCombineInputs(maps, alpha, z);
  const Eigen::Index count = alpha.size();
  const Vec w = SoftmaxVec(alpha);
  const Vec z_vec = Eigen::Map<const Vec>(z.data(), count);
  const Vec selected = z_vec.cwiseProduct(w);
  const double total = selected.sum() + epsilon;
  const Vec normalized = selected / total;

  CombineGradients g;
  Vec d_normalized(count);
  for (Eigen::Index l = 0; l < count; ++l) {
    const auto& map = maps[static_cast<std::size_t>(l)];
    d_normalized(l) = (map.data.array() * d_combined.data.array()).sum();
    BevMap d_map(map.nx, map.ny, map.channels());
    d_map.data = normalized(l) * d_combined.data;
    g.d_maps.push_back(std::move(d_map));
  }
  const double d_total = -d_normalized.dot(selected) / (total * total);
  const Vec d_selected = (d_normalized / total).array() + d_total;
  const Vec d_w = d_selected.cwiseProduct(z_vec);
  g.d_alpha = w.cwiseProduct((d_w.array() - w.dot(d_w)).matrix());
  const Vec d_z = d_selected.cwiseProduct(w);
  g.d_z.assign(d_z.data(), d_z.data() + d_z.size());
  return g;
}

double ReconstructionLoss(const BevMap& predicted, const BevMap& target) {
  Require(predicted.data.rows() == target.data.rows() && predicted.data.cols() == target.data.cols(),
          "reconstruction_loss: dim mismatch");
  return (predicted.data - target.data).squaredNorm();
}

Mat ReconstructionLossBackward(const BevMap& predicted, const BevMap& target, double d_loss) {
  Require(predicted.data.rows() == target.data.rows() && predicted.data.cols() == target.data.cols(),
          "reconstruction_loss: dim mismatch");
  return 2.0 * d_loss * (predicted.data - target.data);
}

RefineParams RefineParams::ZerosLike() const {
  RefineParams z;
  z.input_proj = Mat::Zero(input_proj.rows(), input_proj.cols());
  z.value = value.ZerosLike();
  z.output_proj = Mat::Zero(output_proj.rows(), output_proj.cols());
  z.window = window;
  return z;
}

Mat FlattenColumns(const VoxelVolume& volume) {
  const auto& g = volume.grid;
  const Eigen::Index columns = static_cast<Eigen::Index>(g.nx()) * g.ny();
  return Eigen::Map<const Mat>(volume.data.data(), columns, static_cast<Eigen::Index>(g.nz()) * volume.channels());
}

namespace {

void CheckRefineInputs(const VoxelVolume& volume, const BevMap& instance_bev, const RefineParams& params) {
  const auto& g = volume.grid;
  Require(instance_bev.nx == g.nx() && instance_bev.ny == g.ny(), "refine_scene: BEV dims differ from the grid");
  const Eigen::Index column_width = static_cast<Eigen::Index>(g.nz()) * volume.channels();
  Require(params.input_proj.cols() == column_width, "refine_scene: input projection must read z*C channels");
  Require(params.output_proj.rows() == column_width && params.output_proj.cols() == params.input_proj.rows(),
          "refine_scene: output projection must map C -> z*C");
  Require(params.value.in_features() == instance_bev.channels() &&
              params.value.out_features() == params.input_proj.rows(),
          "refine_scene: value projection width mismatch");
}

}  // namespace

VoxelVolume RefineScene(const VoxelVolume& volume, const BevMap& instance_bev, const RefineParams& params) {
  CheckRefineInputs(volume, instance_bev, params);
  const auto& g = volume.grid;
  BevMap query(g.nx(), g.ny(), static_cast<int>(params.input_proj.rows()));
  query.data = FlattenColumns(volume) * params.input_proj.transpose();
  BevMap kv(g.nx(), g.ny(), params.value.out_features());
  kv.data = LinearForward(params.value, instance_bev.data);
  const BevMap refined = WindowAttention(query, kv, params.window);
  const Mat expanded = refined.data * params.output_proj.transpose();
  VoxelVolume out = volume;
  out.data += Eigen::Map<const Mat>(expanded.data(), volume.data.rows(), volume.data.cols());
  return out;
}

RefineGradients RefineSceneBackward(const VoxelVolume& volume, const BevMap& instance_bev,
                                    const RefineParams& params, const Mat& d_out) {
  CheckRefineInputs(volume, instance_bev, params);
  const auto& g = volume.grid;
  const Mat flat = FlattenColumns(volume);
  BevMap query(g.nx(), g.ny(), static_cast<int>(params.input_proj.rows()));
  query.data = flat * params.input_proj.transpose();
  BevMap kv(g.nx(), g.ny(), params.value.out_features());
  kv.data = LinearForward(params.value, instance_bev.data);
  const BevMap refined = WindowAttention(query, kv, params.window);

  RefineGradients r;
  r.d_params = params.ZerosLike();
  const Mat d_expanded = Eigen::Map<const Mat>(d_out.data(), flat.rows(), flat.cols());
  r.d_params.output_proj.noalias() += d_expanded.transpose() * refined.data;
  BevMap d_refined(g.nx(), g.ny(), refined.channels());
  d_refined.data = d_expanded * params.output_proj;
  const WindowAttentionGradients wg = WindowAttentionBackward(query, kv, params.window, d_refined);
  r.d_instance_bev = BevMap(instance_bev.nx, instance_bev.ny, instance_bev.channels());
  r.d_instance_bev.data = LinearBackward(params.value, instance_bev.data, wg.d_kv.data, &r.d_params.value);
  r.d_params.input_proj.noalias() += wg.d_query.data.transpose() * flat;
  const Mat d_flat = wg.d_query.data * params.input_proj;
  r.d_volume = d_out + Eigen::Map<const Mat>(d_flat.data(), volume.data.rows(), volume.data.cols());
  return r;
}

}  // namespace ocean
