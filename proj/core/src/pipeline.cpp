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

#include "ocean/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ocean/rng.hpp"

namespace ocean {

int ModelConfig::lift_scale_index() const {
  const auto it = std::find(scales.begin(), scales.end(), lift_scale);
  Require(it != scales.end(), "model config: lift scale must be one of the feature scales");
  return static_cast<int>(it - scales.begin());
}

void ModelConfig::Validate() const {
  Require(channels >= 1 && context_channels >= 1 && sam_channels >= 1 && head_hidden >= 1,
          "model config: channel widths must be positive");
  Require(!scales.empty() && scales.size() == feature_channels.size(),
          "model config: one feature width per scale required");
  for (std::size_t s = 0; s < scales.size(); ++s) {
    Require(scales[s] >= 1 && feature_channels[s] >= 1, "model config: scales and widths must be positive");
  }
  lift_scale_index();
  Require(depth_bins >= 1, "model config: depth bins must be positive");
  Require(num_classes >= 1, "model config: at least one semantic class required");
  Require(num_layers >= 0, "model config: layer count must be nonnegative");
  Require(gsga_points >= 1, "model config: at least one sampling point required");
  Require(grid_dims[0] >= 1 && grid_dims[1] >= 1 && grid_dims[2] >= 1, "model config: grid dims must be positive");
  Require(window >= 1 && grid_dims[0] % window == 0 && grid_dims[1] % window == 0,
          "model config: BEV dims must be divisible by the window size");
  Require(temperature > 0.0 && epsilon > 0.0, "model config: temperature and epsilon must be positive");
  PlanDecoder(grid_dims[0], grid_dims[1]);
}

ModelShapes PlanShapes(const ModelConfig& config) {
  config.Validate();
  const auto [x, y, z] = config.grid_dims;
  ModelShapes s;
  s.lifted_volume = {x, y, z, config.channels};
  s.scattered_volume = {x, y, z, config.channels};
  s.bev = {x, y, config.channels};
  s.instance_bev = {x, y, config.channels + 1};
  s.decoder_layers = PlanDecoder(x, y).num_layers;
  s.logits = {x, y, z, config.num_classes + 1};
  return s;
}

void SceneFixture::Validate() const {
  Require(image_height >= 1 && image_width >= 1, "fixture: image dims must be positive");
  Require(!scales.empty() && features.size() == scales.size() && depth_prior.size() == scales.size(),
          "fixture: one feature map and depth prior per scale required");
  camera.Validate();
  grid.Validate();
  binning.Validate();
  for (std::size_t s = 0; s < scales.size(); ++s) {
    const int r = scales[s];
    Require(r >= 1 && image_height % r == 0 && image_width % r == 0, "fixture: image dims not divisible by scale");
    Require(features[s].height == image_height / r && features[s].width == image_width / r,
            "fixture: feature map dims inconsistent with scale");
    Require(depth_prior[s].SameSpatial(features[s]) && depth_prior[s].channels() == binning.num_bins,
            "fixture: depth prior dims inconsistent");
  }
  Require(std::find(scales.begin(), scales.end(), lift_scale) != scales.end(), "fixture: lift scale missing");
  const int lh = image_height / lift_scale;
  const int lw = image_width / lift_scale;
  Require(context.height == lh && context.width == lw, "fixture: context must live at the lift scale");
  Require(sam.height == lh && sam.width == lw, "fixture: sam features must live at the lift scale");
  Require(gt_depth.height == lh && gt_depth.width == lw && gt_depth.channels() == 1,
          "fixture: gt depth must be a lift-scale single-channel map");
  Require(mask.height == image_height && mask.width == image_width, "fixture: mask must be full resolution");
  mask.Validate();
  Require(depth_map.height == image_height && depth_map.width == image_width && depth_map.channels() == 1,
          "fixture: depth map must be full-resolution single-channel");
  Require(labels.size() == static_cast<std::size_t>(grid.num_voxels()), "fixture: one label per voxel required");
}

namespace {

template <typename Self, typename Fn>
void VisitParams(Self& p, Fn&& fn) {
  auto linear = [&](const std::string& name, auto& l) {
    fn(name + ".weight", l.weight);
    if (l.has_bias()) fn(name + ".bias", l.bias);
  };
  linear("context_proj", p.context_proj);
  for (std::size_t s = 0; s < p.depth_heads.size(); ++s) linear("depth_heads." + std::to_string(s), p.depth_heads[s]);
  for (std::size_t s = 0; s < p.pixel_proj.size(); ++s) linear("pixel_proj." + std::to_string(s), p.pixel_proj[s]);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string base = "layers." + std::to_string(l) + ".";
    fn(base + "norm_sga", layer.norm_sga);
    linear(base + "sga_query", layer.sga_query);
    linear(base + "sga_key", layer.sga_key);
    linear(base + "sga_value", layer.sga_value);
    linear(base + "sga_output", layer.sga_output);
    fn(base + "norm_gsga", layer.norm_gsga);
    fn(base + "gsga.projection", layer.gsga.projection);
    linear(base + "gsga.offsets", layer.gsga.offsets);
    linear(base + "gsga.weights", layer.gsga.weights);
    fn(base + "gsga.gate", layer.gsga.gate);
    fn(base + "gsga.gate_bias", layer.gsga.gate_bias);
    fn(base + "norm_ffn", layer.norm_ffn);
    linear(base + "ffn_in", layer.ffn_in);
    linear(base + "ffn_out", layer.ffn_out);
  }
  fn("bev_proj", p.bev_proj);
  linear("decoder.seed", p.decoder.seed);
  for (std::size_t l = 0; l < p.decoder.layers.size(); ++l) {
    fn("decoder.layers." + std::to_string(l) + ".weight", p.decoder.layers[l].weight);
    fn("decoder.layers." + std::to_string(l) + ".bias", p.decoder.layers[l].bias);
  }
  linear("decision.hidden", p.decision.hidden);
  linear("decision.output", p.decision.output);
  fn("refine.input_proj", p.refine.input_proj);
  linear("refine.value", p.refine.value);
  fn("refine.output_proj", p.refine.output_proj);
  linear("head_hidden", p.head_hidden);
  linear("head_out", p.head_out);
}

}  // namespace

void ModelParams::ForEach(const std::function<void(const std::string&, Mat&)>& fn) { VisitParams(*this, fn); }

void ModelParams::ForEach(const std::function<void(const std::string&, const Mat&)>& fn) const {
  VisitParams(*this, fn);
}

ModelParams ModelParams::ZerosLike() const {
  ModelParams z = *this;
  z.ForEach([](const std::string&, Mat& m) { m.setZero(); });
  return z;
}

std::size_t ModelParams::NumScalars() const {
  std::size_t n = 0;
  ForEach([&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool ModelParams::AllFinite() const {
  bool finite = true;
  ForEach([&](const std::string&, const Mat& m) { finite = finite && m.allFinite(); });
  return finite;
}

ModelParams InitParams(const ModelConfig& config, std::uint64_t seed, const InitOptions& options) {
  config.Validate();
  std::mt19937_64 rng = MakeStream(seed, 0x1417);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal(rng);
    return m;
  };
  auto dense = [&](int in, int out, bool zero = false, double gain = 1.0) {
    Linear l(in, out);
    if (!zero) l.weight = randn(out, in, gain / std::sqrt(static_cast<double>(in)));
    return l;
  };
  const int c = config.channels;
  const int z_cells = config.grid_dims[2];
  const bool zero_out = options.zero_output_projections;
  const double out_gain = 0.5;

  ModelParams p;
  p.context_proj = dense(config.context_channels, c);
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    p.depth_heads.push_back(dense(config.feature_channels[s], config.depth_bins, true));
    p.pixel_proj.push_back(dense(config.feature_channels[s], c));
  }
  for (int l = 0; l < config.num_layers; ++l) {
    SgdaLayerParams layer;
    layer.norm_sga = Mat::Ones(1, c);
    layer.norm_gsga = Mat::Ones(1, c);
    layer.norm_ffn = Mat::Ones(1, c);
    layer.sga_query = dense(c, c);
    layer.sga_key = dense(c, c);
    layer.sga_value = dense(c, c);
    layer.sga_output = dense(c, c, zero_out, out_gain);
    layer.gsga.projection = zero_out ? Mat::Zero(c, c) : randn(c, c, out_gain / std::sqrt(double(c)));
    layer.gsga.offsets = dense(c, 2 * config.gsga_points, zero_out, 0.25);
    layer.gsga.weights = dense(c, config.gsga_points);
    layer.gsga.gate = randn(c, config.sam_channels, 1.0 / std::sqrt(double(config.sam_channels)));
    layer.gsga.gate_bias = Mat::Constant(1, 1, 2.0);
    layer.ffn_in = dense(c, 4 * c);
    layer.ffn_out = dense(4 * c, c, zero_out, out_gain);
    p.layers.push_back(std::move(layer));
  }
  p.bev_proj = Mat::Identity(c, c);
  p.decoder = MakeDecoder(c, config.grid_dims[0], config.grid_dims[1]);
  p.decoder.seed.weight = randn(p.decoder.seed.weight.rows(), c, 1.0 / std::sqrt(double(c)));
  for (auto& layer : p.decoder.layers) {
    layer.weight = randn(layer.weight.rows(), layer.weight.cols(), 1.0 / std::sqrt(double(layer.weight.cols())));
  }
  if (zero_out) {
    Mat& last = p.decoder.layers.empty() ? p.decoder.seed.weight : p.decoder.layers.back().weight;
    last.setZero();
  }
  p.decision.hidden = dense(c, c);
  p.decision.output = dense(c, 2);
  p.refine.input_proj = randn(c, static_cast<Eigen::Index>(z_cells) * c, 1.0 / std::sqrt(double(z_cells * c)));
  p.refine.value = dense(c, c);
  p.refine.output_proj =
      zero_out ? Mat::Zero(z_cells * c, c) : randn(z_cells * c, c, out_gain / std::sqrt(double(c)));
  p.refine.window = config.window;
  p.head_hidden = dense(c, config.head_hidden);
  p.head_out = dense(config.head_hidden, config.num_classes + 1);
  return p;
}

void SymbolLedger::Produce(const std::string& symbol, const std::string& module) {
  producers_[symbol].push_back(module);
}

void SymbolLedger::Consume(const std::string& symbol, const std::string& module) {
  consumers_[symbol].insert(module);
}

LossGradients LossGradients::OfTotal(const LossWeights& weights) {
  return {1.0, 1.0, 1.0, weights.depth, weights.recon};
}

namespace {

void CheckCompatible(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params) {
  config.Validate();
  fixture.Validate();
  Require(fixture.scales == config.scales, "forward: fixture scales differ from the model config");
  Require(fixture.lift_scale == config.lift_scale, "forward: fixture lift scale differs from the model config");
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    Require(fixture.features[s].channels() == config.feature_channels[s],
            "forward: fixture feature width differs from the model config");
  }
  Require(fixture.context.channels() == config.context_channels, "forward: context width mismatch");
  Require(fixture.sam.channels() == config.sam_channels, "forward: sam feature width mismatch");
  Require(fixture.binning.num_bins == config.depth_bins, "forward: depth bin count mismatch");
  Require(fixture.grid.dims == config.grid_dims, "forward: grid dims mismatch");
  Require(params.layers.size() == static_cast<std::size_t>(config.num_layers) &&
              params.pixel_proj.size() == config.scales.size() && params.depth_heads.size() == config.scales.size(),
          "forward: parameter structure does not match the config");
}

Mat PriorLogits(const FeatureMap& prior) {
  return prior.data.unaryExpr([](double p) { return std::log(std::max(p, 1e-12)); });
}

FeatureMap AsFeatureMap(const Mat& rows, int height, int width) {
  FeatureMap m;
  m.height = height;
  m.width = width;
  m.data = rows;
  return m;
}

Mat ColumnSums(const VoxelVolume& volume) {
  const auto& g = volume.grid;
  const Eigen::Index columns = static_cast<Eigen::Index>(g.nx()) * g.ny();
  Mat sums = Mat::Zero(columns, volume.channels());
  for (Eigen::Index r = 0; r < columns; ++r) {
    for (int z = 0; z < g.nz(); ++z) sums.row(r) += volume.data.row(r * g.nz() + z);
  }
  return sums;
}

std::vector<ScaleAttentionInputs> AttentionInputs(const LayerTrace& layer, const std::vector<Mat>& depth_dist) {
  std::vector<ScaleAttentionInputs> inputs;
  for (std::size_t s = 0; s < depth_dist.size(); ++s) {
    inputs.push_back({layer.keys[s], layer.values[s], depth_dist[s]});
  }
  return inputs;
}

}  // namespace

ForwardResult Forward(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                      const ForwardOptions& options) {
  CheckCompatible(config, fixture, params);
  ForwardResult result;
  ForwardTrace& t = result.trace;
  SymbolLedger& ledger = result.ledger;
  const std::size_t num_scales = config.scales.size();
  const int lift = config.lift_scale_index();
  const int lift_h = fixture.image_height / config.lift_scale;
  const int lift_w = fixture.image_width / config.lift_scale;

  // Per-scale projected pixel features and depth distributions.
  for (std::size_t s = 0; s < num_scales; ++s) {
    t.pixel_features.push_back(LinearForward(params.pixel_proj[s], fixture.features[s].data));
    t.depth_dist.push_back(SoftmaxRows(PriorLogits(fixture.depth_prior[s]) +
                                       LinearForward(params.depth_heads[s], fixture.features[s].data)));
  }
  ledger.Produce("F", "pipeline");
  ledger.Produce("D", "pipeline");
  t.context = AsFeatureMap(LinearForward(params.context_proj, fixture.context.data), lift_h, lift_w);
  ledger.Produce("X", "pipeline");

  // Lifting and proposal selection.
  t.lift_plan = BuildLiftPlan(lift_h, lift_w, config.lift_scale, fixture.camera, fixture.binning, fixture.grid);
  t.lifted = LiftFeatures(t.lift_plan, t.context, AsFeatureMap(t.depth_dist[lift], lift_h, lift_w));
  ledger.Consume("X", "geometry");
  ledger.Consume("D", "geometry");
  ledger.Produce("V", "geometry");
  t.occupancy = OccupancyMaskFromDepth(fixture.depth_map, fixture.camera, fixture.grid);
  ledger.Produce("M", "geometry");
  t.proposals = SelectProposals(t.lifted, t.occupancy, fixture.camera, fixture.image_height, fixture.image_width);
  ledger.Consume("V", "geometry");
  ledger.Consume("M", "geometry");
  ledger.Produce("Q", "geometry");
  ledger.Produce("uvd", "geometry");
  const double half = 0.5 * (config.lift_scale - 1);
  for (const Vec2& uv : t.proposals.pixel_coords) {
    t.proposal_positions.emplace_back((uv.x() - half) / config.lift_scale, (uv.y() - half) / config.lift_scale);
  }

  // Semantic grouping.
  t.proposal_ids = AssignInstanceIds(t.proposals.pixel_coords, t.proposals.valid, fixture.mask);
  ledger.Consume("uvd", "grouping");
  for (int s : config.scales) t.scale_masks.push_back(DownsampleMask(fixture.mask, s));
  ledger.Produce("S", "grouping");
  t.clustering = BuildClusters(t.proposal_ids, t.scale_masks, config.scales);
  ledger.Consume("S", "grouping");
  ledger.Produce("clusters", "grouping");

  // SGDA block over resident proposal features.
  const FeatureMap image = AsFeatureMap(t.pixel_features[static_cast<std::size_t>(lift)], lift_h, lift_w);
  Mat x = t.proposals.features;
  if (t.proposals.count() > 0) {
    ledger.Consume("Q", "attention");
    ledger.Consume("uvd", "attention");
    ledger.Consume("clusters", "attention");
    ledger.Consume("F", "attention");
    ledger.Consume("D", "attention");
    for (int l = 0; l < config.num_layers; ++l) {
      const SgdaLayerParams& lp = params.layers[static_cast<std::size_t>(l)];
      LayerTrace layer;
      layer.x_in = x;
      layer.norm_sga = RmsNorm(x, lp.norm_sga);
      layer.query = LinearForward(lp.sga_query, layer.norm_sga);
      for (std::size_t s = 0; s < num_scales; ++s) {
        layer.keys.push_back(LinearForward(lp.sga_key, t.pixel_features[s]));
        layer.values.push_back(LinearForward(lp.sga_value, t.pixel_features[s]));
      }
      const auto inputs = AttentionInputs(layer, t.depth_dist);
      Sga3dOptions sga_options{config.denominator_mode,
                               options.record_denominators ? &layer.denominators : nullptr};
      layer.residual = RunSga3d(t.clustering, layer.query, t.proposals.depths, inputs, fixture.binning, sga_options);
      const std::string tag = "[" + std::to_string(l) + "]";
      ledger.Produce("Q~" + tag, "attention");
      layer.x_sga = x + LinearForward(lp.sga_output, layer.residual);
      ledger.Consume("Q~" + tag, "pipeline");

      layer.norm_gsga = RmsNorm(layer.x_sga, lp.norm_gsga);
      layer.gsga_out = Gsga(layer.norm_gsga, t.proposal_positions, image, fixture.sam, lp.gsga);
      ledger.Produce("Q^" + tag, "attention");
      layer.x_gsga = layer.x_sga + layer.gsga_out;
      ledger.Consume("Q^" + tag, "pipeline");

      layer.norm_ffn = RmsNorm(layer.x_gsga, lp.norm_ffn);
      layer.ffn_hidden = LinearForward(lp.ffn_in, layer.norm_ffn);
      layer.ffn_act = Silu(layer.ffn_hidden);
      layer.x_out = layer.x_gsga + LinearForward(lp.ffn_out, layer.ffn_act);
      x = layer.x_out;
      t.layers.push_back(std::move(layer));
    }
    t.scattered = ScatterProposals(t.lifted, t.proposals, x);
  } else {
    t.scattered = t.lifted;
  }
  ledger.Consume("V", "pipeline");
  ledger.Produce("V'", "pipeline");

  // Instance-aware local diffusion.
  const auto [nx, ny, nz] = config.grid_dims;
  t.instances = PoolInstanceFeatures(t.clustering, t.pixel_features);
  ledger.Consume("clusters", "ild");
  ledger.Consume("F", "ild");
  ledger.Produce("instance_features", "ild");
  const Eigen::Index instances = t.instances.features.rows();
  if (instances > 0) {
    std::vector<BevMap> maps;
    Vec alpha(instances);
    for (Eigen::Index l = 0; l < instances; ++l) {
      t.decoded.push_back(DecodeInstanceBev(t.instances.features.row(l), params.decoder));
      maps.push_back(t.decoded.back().map);
      alpha(l) = t.decoded.back().alpha;
    }
    ledger.Produce("P_l", "ild");
    ledger.Produce("alpha", "ild");
    t.decision_logits = DecisionLogits(params.decision, t.instances.features);
    std::mt19937_64 rng = MakeStream(options.seed, 0x6a6d);
    t.decision = GumbelDecision(t.decision_logits, SampleGumbelNoise(instances, rng), config.temperature,
                                options.hard_decisions);
    ledger.Consume("instance_features", "ild");
    ledger.Produce("Z", "ild");
    t.combined = CombineBev(maps, alpha, t.decision.z, config.epsilon);
    ledger.Consume("P_l", "ild");
    ledger.Consume("alpha", "ild");
    ledger.Consume("Z", "ild");
  } else {
    t.combined.combined = BevMap(nx, ny, config.channels);
  }
  ledger.Produce("P^", "ild");

  t.column_sums = ColumnSums(t.scattered);
  t.scene_bev = BevMap(nx, ny, config.channels);
  t.scene_bev.data = t.column_sums * params.bev_proj.transpose();
  ledger.Consume("V'", "ild");
  ledger.Produce("F_bev", "ild");
  const double recon = ReconstructionLoss(t.combined.combined, t.scene_bev);
  ledger.Consume("P^", "ild");
  ledger.Consume("F_bev", "ild");
  ledger.Produce("L_recon", "ild");

  t.refined = RefineScene(t.scattered, t.combined.combined, params.refine);
  t.head_pre = LinearForward(params.head_hidden, t.refined.data);
  result.occupancy.grid = fixture.grid;
  result.occupancy.logits = LinearForward(params.head_out, Silu(t.head_pre));
  result.occupancy.labels = fixture.labels;
  ledger.Produce("O", "pipeline");

  LossComponents c;
  c.ce = CrossEntropyLoss(result.occupancy.logits, fixture.labels);
  const ScalLosses scal = ComputeScalLosses(result.occupancy.logits, fixture.labels);
  c.scal_sem = scal.semantic;
  c.scal_geo = scal.geometric;
  c.depth = DepthLoss(AsFeatureMap(t.depth_dist[static_cast<std::size_t>(lift)], lift_h, lift_w), fixture.gt_depth,
                      fixture.binning);
  c.recon = recon;
  ledger.Consume("O", "losses");
  ledger.Consume("D", "losses");
  ledger.Consume("L_recon", "losses");
  result.losses = TotalLoss(c, config.loss_weights);
  ledger.Produce("L", "losses");
  return result;
}

ModelParams Backward(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                     const ForwardResult& forward, const LossGradients& upstream) {
  CheckCompatible(config, fixture, params);
  const ForwardTrace& t = forward.trace;
  Require(t.pixel_features.size() == config.scales.size() && t.lifted.data.size() > 0 &&
              t.refined.data.rows() == fixture.grid.num_voxels(),
          "backward: forward intermediates are missing");
  ModelParams g = params.ZerosLike();
  const std::size_t num_scales = config.scales.size();
  const auto lift = static_cast<std::size_t>(config.lift_scale_index());
  const int lift_h = fixture.image_height / config.lift_scale;
  const int lift_w = fixture.image_width / config.lift_scale;

  // Head and occupancy losses.
  const Mat& logits = forward.occupancy.logits;
  Mat d_logits = upstream.ce * CrossEntropyLossBackward(logits, fixture.labels) +
                 ScalLossesBackward(logits, fixture.labels, upstream.scal_sem, upstream.scal_geo);
  const Mat head_act = Silu(t.head_pre);
  const Mat d_head_act = LinearBackward(params.head_out, head_act, d_logits, &g.head_out);
  const Mat d_refined =
      LinearBackward(params.head_hidden, t.refined.data, SiluBackward(t.head_pre, d_head_act), &g.head_hidden);

  // Refinement and reconstruction.
  RefineGradients rg = RefineSceneBackward(t.scattered, t.combined.combined, params.refine, d_refined);
  g.refine.input_proj += rg.d_params.input_proj;
  g.refine.value.weight += rg.d_params.value.weight;
  g.refine.value.bias += rg.d_params.value.bias;
  g.refine.output_proj += rg.d_params.output_proj;
  Mat d_scattered = std::move(rg.d_volume);
  BevMap d_combined = std::move(rg.d_instance_bev);
  const Mat d_recon = ReconstructionLossBackward(t.combined.combined, t.scene_bev, upstream.recon);
  d_combined.data += d_recon;
  const Mat d_scene_bev = -d_recon;
  g.bev_proj.noalias() += d_scene_bev.transpose() * t.column_sums;
  const Mat d_column_sums = d_scene_bev * params.bev_proj;
  const int nz = fixture.grid.nz();
  for (Eigen::Index r = 0; r < d_column_sums.rows(); ++r) {
    for (int z = 0; z < nz; ++z) d_scattered.row(r * nz + z) += d_column_sums.row(r);
  }

  // Instance decoding, selection and pooling.
  std::vector<Mat> d_pixel(num_scales);
  for (std::size_t s = 0; s < num_scales; ++s) {
    d_pixel[s] = Mat::Zero(t.pixel_features[s].rows(), t.pixel_features[s].cols());
  }
  const Eigen::Index instances = t.instances.features.rows();
  if (instances > 0) {
    std::vector<BevMap> maps;
    Vec alpha(instances);
    for (Eigen::Index l = 0; l < instances; ++l) {
      maps.push_back(t.decoded[static_cast<std::size_t>(l)].map);
      alpha(l) = t.decoded[static_cast<std::size_t>(l)].alpha;
    }
    const CombineGradients cg = CombineBevBackward(maps, alpha, t.decision.z, config.epsilon, d_combined);
    Mat d_features = Mat::Zero(instances, t.instances.features.cols());
    for (Eigen::Index l = 0; l < instances; ++l) {
      d_features.row(l) = DecodeInstanceBevBackward(t.instances.features.row(l), params.decoder,
                                                    cg.d_maps[static_cast<std::size_t>(l)], cg.d_alpha(l), &g.decoder);
    }
    const Mat d_decision_logits = GumbelDecisionBackward(t.decision, cg.d_z);
    d_features += DecisionLogitsBackward(params.decision, t.instances.features, d_decision_logits, &g.decision);
    const auto d_pooled = PoolInstanceFeaturesBackward(t.clustering, t.pixel_features, t.instances, d_features);
    for (std::size_t s = 0; s < num_scales; ++s) d_pixel[s] += d_pooled[s];
  }

  // Scatter-back and the SGDA layers.
  std::vector<Mat> d_dist(num_scales);
  for (std::size_t s = 0; s < num_scales; ++s) {
    d_dist[s] = Mat::Zero(t.depth_dist[s].rows(), t.depth_dist[s].cols());
  }
  Mat d_lifted = d_scattered;
  const auto& proposals = t.proposals;
  if (proposals.count() > 0) {
    Mat d_x(static_cast<Eigen::Index>(proposals.count()), config.channels);
    for (std::size_t n = 0; n < proposals.count(); ++n) {
      const Eigen::Index row = fixture.grid.linear(proposals.voxel_indices[n]);
      d_x.row(static_cast<Eigen::Index>(n)) = d_scattered.row(row);
      d_lifted.row(row).setZero();
    }
    const FeatureMap image = AsFeatureMap(t.pixel_features[lift], lift_h, lift_w);
    for (std::size_t l = t.layers.size(); l-- > 0;) {
      const LayerTrace& layer = t.layers[l];
      const SgdaLayerParams& lp = params.layers[l];
      SgdaLayerParams& gl = g.layers[l];

      // Feed-forward.
      const Mat d_act = LinearBackward(lp.ffn_out, layer.ffn_act, d_x, &gl.ffn_out);
      const Mat d_norm_ffn =
          LinearBackward(lp.ffn_in, layer.norm_ffn, SiluBackward(layer.ffn_hidden, d_act), &gl.ffn_in);
      Mat d_x_gsga = d_x + RmsNormBackward(layer.x_gsga, lp.norm_ffn, d_norm_ffn, &gl.norm_ffn);

      // Similarity-gated deformable attention.
      GsgaGradients gg = GsgaBackward(layer.norm_gsga, t.proposal_positions, image, fixture.sam, lp.gsga, d_x_gsga);
      gl.gsga.projection += gg.d_params.projection;
      gl.gsga.offsets.weight += gg.d_params.offsets.weight;
      gl.gsga.offsets.bias += gg.d_params.offsets.bias;
      gl.gsga.weights.weight += gg.d_params.weights.weight;
      gl.gsga.weights.bias += gg.d_params.weights.bias;
      gl.gsga.gate += gg.d_params.gate;
      gl.gsga.gate_bias += gg.d_params.gate_bias;
      d_pixel[lift] += gg.d_image.data;
      Mat d_x_sga = d_x_gsga + RmsNormBackward(layer.x_sga, lp.norm_gsga, gg.d_queries, &gl.norm_gsga);

      // Depth-weighted scattered linear attention.
      const Mat d_residual = LinearBackward(lp.sga_output, layer.residual, d_x_sga, &gl.sga_output);
      const auto inputs = AttentionInputs(layer, t.depth_dist);
      const RunSga3dGradients sg = RunSga3dBackward(t.clustering, layer.query, proposals.depths, inputs,
                                                    fixture.binning, config.denominator_mode, d_residual);
      for (std::size_t s = 0; s < num_scales; ++s) {
        d_pixel[s] += LinearBackward(lp.sga_key, t.pixel_features[s], sg.d_keys[s], &gl.sga_key);
        d_pixel[s] += LinearBackward(lp.sga_value, t.pixel_features[s], sg.d_values[s], &gl.sga_value);
        d_dist[s] += sg.d_depth_dist[s];
      }
      const Mat d_norm_sga = LinearBackward(lp.sga_query, layer.norm_sga, sg.d_queries, &gl.sga_query);
      d_x = d_x_sga + RmsNormBackward(layer.x_in, lp.norm_sga, d_norm_sga, &gl.norm_sga);
    }
    for (std::size_t n = 0; n < proposals.count(); ++n) {
      d_lifted.row(fixture.grid.linear(proposals.voxel_indices[n])) += d_x.row(static_cast<Eigen::Index>(n));
    }
  }

  // Lifting, depth supervision and the input projections.
  const FeatureMap lift_dist = AsFeatureMap(t.depth_dist[lift], lift_h, lift_w);
  const LiftGradients lg = LiftFeaturesBackward(t.lift_plan, t.context, lift_dist, d_lifted);
  d_dist[lift] += lg.d_depth_dist.data;
  d_dist[lift] += DepthLossBackward(lift_dist, fixture.gt_depth, fixture.binning, upstream.depth);
  LinearBackward(params.context_proj, fixture.context.data, lg.d_context.data, &g.context_proj);
  for (std::size_t s = 0; s < num_scales; ++s) {
    const Mat d_depth_logits = SoftmaxRowsBackward(t.depth_dist[s], d_dist[s]);
    LinearBackward(params.depth_heads[s], fixture.features[s].data, d_depth_logits, &g.depth_heads[s]);
    LinearBackward(params.pixel_proj[s], fixture.features[s].data, d_pixel[s], &g.pixel_proj[s]);
  }
  return g;
}

TrainResult TrainSteps(const ModelConfig& config, const SceneFixture& fixture, ModelParams& params, int steps,
                       double learning_rate, const ForwardOptions& options) {
  Require(steps >= 1, "train_steps: steps must be >= 1");
  Require(learning_rate >= 0.0, "train_steps: learning rate must be nonnegative");
  TrainResult result;
  const LossGradients upstream = LossGradients::OfTotal(config.loss_weights);
  for (int step = 0; step < steps; ++step) {
    const std::string where = "train_steps: diverged at step " + std::to_string(step);
    if (!params.AllFinite()) throw NumericalError(where + " (non-finite parameters)");
    ForwardResult fwd;
    try {
      fwd = Forward(config, fixture, params, options);
    } catch (const NumericalError& e) {
      throw NumericalError(where + ": " + e.what());
    }
    if (!std::isfinite(fwd.losses.total)) throw NumericalError(where + " (non-finite loss)");
    result.totals.push_back(fwd.losses.total);
    result.reports.push_back(fwd.losses);
    ModelParams grads = Backward(config, fixture, params, fwd, upstream);
    std::vector<const Mat*> grad_tensors;
    grads.ForEach([&](const std::string&, const Mat& m) { grad_tensors.push_back(&m); });
    std::size_t k = 0;
    params.ForEach([&](const std::string&, Mat& m) { m -= learning_rate * *grad_tensors[k++]; });
  }
  return result;
}

}  // namespace ocean
