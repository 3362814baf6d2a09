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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <thread>

#include "ocean/harness.hpp"
#include "ocean/oracle.hpp"
#include "ocean/rng.hpp"

namespace ocean {
namespace {

using Inputs = std::vector<Mat>;

// A scalar objective <op(inputs), R> with its analytic gradient.
struct Problem {
  std::vector<std::string> names;
  Inputs inputs;
  std::function<double(const Inputs&)> objective;
  std::function<Inputs(const Inputs&)> gradient;
};

using ProblemFactory = std::function<Problem(std::mt19937_64&)>;

int RandInt(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Mat Randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Mat Uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double Dot(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

FeatureMap Map(const Mat& data, int h, int w) {
  FeatureMap m;
  m.height = h;
  m.width = w;
  m.data = data;
  return m;
}

BevMap Bev(const Mat& data, int nx, int ny) {
  BevMap m;
  m.nx = nx;
  m.ny = ny;
  m.data = data;
  return m;
}

Linear MakeLinear(const Mat& w, const Mat& b) {
  Linear l;
  l.weight = w;
  l.bias = b;
  return l;
}

std::vector<Vec2> Positions(const Mat& p) {
  std::vector<Vec2> out;
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.emplace_back(p(i, 0), p(i, 1));
  return out;
}

Mat PositionsMat(const std::vector<Vec2>& p) {
  Mat out(static_cast<Eigen::Index>(p.size()), 2);
  for (std::size_t i = 0; i < p.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = p[i].transpose();
  return out;
}

// Non-integer coordinates strictly inside [0, size - 1].
Mat InteriorPositions(Eigen::Index n, int h, int w, std::mt19937_64& rng) {
  Mat p(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i, 0) = RandInt(rng, 0, w - 2) + std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    p(i, 1) = RandInt(rng, 0, h - 2) + std::uniform_real_distribution<double>(0.05, 0.95)(rng);
  }
  return p;
}

Problem PhiProblem(std::mt19937_64& rng) {
  const Mat x = Randn(RandInt(rng, 1, 6), RandInt(rng, 1, 5), rng, 1.5);
  const Mat r = Randn(x.rows(), x.cols(), rng);
  return {{"x"}, {x}, [r](const Inputs& in) { return Dot(KernelPhi(in[0]), r); },
          [r](const Inputs& in) { return Inputs{KernelPhiBackward(in[0], r)}; }};
}

// n >= 2 and C >= 2: with a single key or a single channel the output does not
// depend on the queries and the relative error of the identically zero query
// gradient is pure roundoff.
Problem SgaProblem(std::mt19937_64& rng) {
  const int m = RandInt(rng, 1, 6), n = RandInt(rng, 2, 6), c = RandInt(rng, 2, 5), cv = RandInt(rng, 1, 4);
  const Mat r = Randn(m, cv, rng);
  return {{"q", "k", "v"},
          {Randn(m, c, rng), Randn(n, c, rng), Randn(n, cv, rng)},
          [r](const Inputs& in) { return Dot(SgaCluster(in[0], in[1], in[2]), r); },
          [r](const Inputs& in) {
            const SgaGradients g = SgaClusterBackward(in[0], in[1], in[2], r);
            return Inputs{g.d_q, g.d_k, g.d_v};
          }};
}

ProblemFactory Sga3dFactory(DenominatorMode mode) {
  return [mode](std::mt19937_64& rng) -> Problem {
    const int m = RandInt(rng, 1, 6), n = RandInt(rng, 2, 6), c = RandInt(rng, 2, 5), cv = RandInt(rng, 1, 4);
    const Mat r = Randn(m, cv, rng);
    return {{"q", "k", "v", "a"},
            {Randn(m, c, rng), Randn(n, c, rng), Randn(n, cv, rng), Uniform(m, n, 0.05, 1.0, rng)},
            [r, mode](const Inputs& in) { return Dot(Sga3dCluster(in[0], in[1], in[2], in[3], mode), r); },
            [r, mode](const Inputs& in) {
              const Sga3dGradients g = Sga3dClusterBackward(in[0], in[1], in[2], in[3], mode, r);
              return Inputs{g.d_q, g.d_k, g.d_v, g.d_a};
            }};
  };
}

// Random two-scale grouping over a 16 x 16 image.
struct RandomGrouping {
  InstanceClustering clustering;
  std::vector<double> depths;
  DepthBinning binning{1.0, 5.0, 4};
  std::vector<int> pixels;  // per scale
};

// Every instance keeps at least two pixels at each scale so no key tensor is
// reduced to a single-key cluster, whose gradient vanishes identically.
RandomGrouping MakeGrouping(std::mt19937_64& rng, int proposals) {
  RandomGrouping g;
  const std::vector<int> scales{2, 4};
  InstanceMask full(16, 16);
  for (bool ok = false; !ok;) {
    for (int& id : full.ids) id = RandInt(rng, 0, 3);
    ok = true;
    for (int s : scales) {
      const InstanceMask down = DownsampleMask(full, s);
      for (int id = 1; id <= 3; ++id) {
        const auto count = std::count(down.ids.begin(), down.ids.end(), id);
        const auto fine = std::count(full.ids.begin(), full.ids.end(), id);
        if (fine > 0 && count < 2) ok = false;
      }
    }
  }
  full.RecountInstances();
  // Keep IDs compact so the mask validates.
  std::vector<int> remap(4, 0);
  int next = 0;
  for (int id = 1; id <= 3; ++id) {
    if (std::find(full.ids.begin(), full.ids.end(), id) != full.ids.end()) remap[static_cast<std::size_t>(id)] = ++next;
  }
  for (int& id : full.ids) id = remap[static_cast<std::size_t>(id)];
  std::vector<InstanceMask> masks;
  for (int s : scales) {
    masks.push_back(DownsampleMask(full, s));
    g.pixels.push_back((16 / s) * (16 / s));
  }
  std::vector<int> ids;
  for (int i = 0; i < proposals; ++i) {
    ids.push_back(RandInt(rng, 0, full.instance_count));
    g.depths.push_back(std::uniform_real_distribution<double>(0.5, 5.5)(rng));
  }
  g.clustering = BuildClusters(ids, masks, scales);
  return g;
}

Problem RunSga3dProblem(std::mt19937_64& rng, DenominatorMode mode) {
  const int n = RandInt(rng, 1, 8), c = RandInt(rng, 2, 4);
  auto grouping = std::make_shared<RandomGrouping>(MakeGrouping(rng, n));
  Problem p;
  p.names = {"queries"};
  p.inputs = {Randn(n, c, rng)};
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string tag = std::to_string(s);
    p.names.insert(p.names.end(), {"keys" + tag, "values" + tag, "depth_dist" + tag});
    p.inputs.push_back(Randn(grouping->pixels[s], c, rng));
    p.inputs.push_back(Randn(grouping->pixels[s], c, rng));
    p.inputs.push_back(Uniform(grouping->pixels[s], 4, 0.05, 1.0, rng));
  }
  const Mat r = Randn(n, c, rng);
  auto scales = [](const Inputs& in) {
    return std::vector<ScaleAttentionInputs>{{in[1], in[2], in[3]}, {in[4], in[5], in[6]}};
  };
  p.objective = [=](const Inputs& in) {
    const auto s = scales(in);
    return Dot(RunSga3d(grouping->clustering, in[0], grouping->depths, s, grouping->binning, {mode, nullptr}), r);
  };
  p.gradient = [=](const Inputs& in) {
    const auto s = scales(in);
    const RunSga3dGradients g =
        RunSga3dBackward(grouping->clustering, in[0], grouping->depths, s, grouping->binning, mode, r);
    Inputs out{g.d_queries};
    for (std::size_t k = 0; k < 2; ++k) {
      out.push_back(g.d_keys[k]);
      out.push_back(g.d_values[k]);
      out.push_back(g.d_depth_dist[k]);
    }
    return out;
  };
  return p;
}

Problem BilinearProblem(std::mt19937_64& rng) {
  const int h = RandInt(rng, 2, 5), w = RandInt(rng, 2, 5), c = RandInt(rng, 1, 3), n = RandInt(rng, 1, 4);
  const Mat r = Randn(n, c, rng);
  return {{"map", "points"},
          {Randn(h * w, c, rng), InteriorPositions(n, h, w, rng)},
          [=](const Inputs& in) {
            const FeatureMap map = Map(in[0], h, w);
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) s += BilinearSample(map, Vec2(in[1](i, 0), in[1](i, 1))).dot(r.row(i));
            return s;
          },
          [=](const Inputs& in) {
            const FeatureMap map = Map(in[0], h, w);
            FeatureMap d_map(h, w, c);
            Mat d_p(n, 2);
            for (Eigen::Index i = 0; i < n; ++i) {
              d_p.row(i) = BilinearSampleBackward(map, Vec2(in[1](i, 0), in[1](i, 1)), r.row(i), &d_map).transpose();
            }
            return Inputs{d_map.data, d_p};
          }};
}

GsgaParams UnpackGsga(const Inputs& in, std::size_t first) {
  GsgaParams p;
  p.projection = in[first];
  p.offsets = MakeLinear(in[first + 1], in[first + 2]);
  p.weights = MakeLinear(in[first + 3], in[first + 4]);
  p.gate = in[first + 5];
  p.gate_bias = in[first + 6];
  return p;
}

Problem GsgaProblem(std::mt19937_64& rng) {
  const int n = RandInt(rng, 1, 4), c = RandInt(rng, 2, 4), ci = RandInt(rng, 1, 3), cs = RandInt(rng, 1, 3);
  const int k = RandInt(rng, 1, 3), h = RandInt(rng, 3, 6), w = RandInt(rng, 3, 6);
  const Mat r = Randn(n, c, rng);
  Problem p;
  p.names = {"queries", "positions", "image", "sam", "projection", "offsets.weight", "offsets.bias",
             "weights.weight", "weights.bias", "gate", "gate_bias"};
  p.inputs = {Randn(n, c, rng),         InteriorPositions(n, h, w, rng), Randn(h * w, ci, rng),
              Randn(h * w, cs, rng),    Randn(c, ci, rng),               Randn(2 * k, c, rng, 0.3),
              Randn(1, 2 * k, rng, 0.3), Randn(k, c, rng),               Randn(1, k, rng),
              Randn(c, cs, rng),        Randn(1, 1, rng)};
  p.objective = [=](const Inputs& in) {
    return Dot(Gsga(in[0], Positions(in[1]), Map(in[2], h, w), Map(in[3], h, w), UnpackGsga(in, 4)), r);
  };
  p.gradient = [=](const Inputs& in) {
    const GsgaGradients g =
        GsgaBackward(in[0], Positions(in[1]), Map(in[2], h, w), Map(in[3], h, w), UnpackGsga(in, 4), r);
    return Inputs{g.d_queries,
                  PositionsMat(g.d_positions),
                  g.d_image.data,
                  g.d_sam.data,
                  g.d_params.projection,
                  g.d_params.offsets.weight,
                  g.d_params.offsets.bias,
                  g.d_params.weights.weight,
                  g.d_params.weights.bias,
                  g.d_params.gate,
                  g.d_params.gate_bias};
  };
  return p;
}

Problem WindowProblem(std::mt19937_64& rng) {
  const int window = RandInt(rng, 1, 3), nx = window * RandInt(rng, 1, 2), ny = window * RandInt(rng, 1, 2);
  const int c = RandInt(rng, 1, 4);
  const Mat r = Randn(nx * ny, c, rng);
  return {{"query", "kv"},
          {Randn(nx * ny, c, rng), Randn(nx * ny, c, rng)},
          [=](const Inputs& in) { return Dot(WindowAttention(Bev(in[0], nx, ny), Bev(in[1], nx, ny), window).data, r); },
          [=](const Inputs& in) {
            const auto g = WindowAttentionBackward(Bev(in[0], nx, ny), Bev(in[1], nx, ny), window, Bev(r, nx, ny));
            return Inputs{g.d_query.data, g.d_kv.data};
          }};
}

Problem LiftProblem(std::mt19937_64& rng) {
  CameraModel camera;
  camera.fx = camera.fy = 2.0;
  camera.cx = camera.cy = 1.5;
  const DepthBinning binning{1.0, 5.0, 4};
  GridSpec grid{{4, 4, 4}, Vec3(-2.0, -2.0, 1.0), 1.0};
  const int h = 4, w = 4, c = RandInt(rng, 1, 3);
  auto plan = std::make_shared<LiftPlan>(BuildLiftPlan(h, w, 1, camera, binning, grid));
  const Mat r = Randn(grid.num_voxels(), c, rng);
  return {{"context", "depth_dist"},
          {Randn(h * w, c, rng), Uniform(h * w, 4, 0.0, 1.0, rng)},
          [=](const Inputs& in) { return Dot(LiftFeatures(*plan, Map(in[0], h, w), Map(in[1], h, w)).data, r); },
          [=](const Inputs& in) {
            const LiftGradients g = LiftFeaturesBackward(*plan, Map(in[0], h, w), Map(in[1], h, w), r);
            return Inputs{g.d_context.data, g.d_depth_dist.data};
          }};
}

Problem PoolProblem(std::mt19937_64& rng) {
  const int c = RandInt(rng, 1, 4);
  auto grouping = std::make_shared<RandomGrouping>(MakeGrouping(rng, 4));
  const Inputs features{Randn(grouping->pixels[0], c, rng), Randn(grouping->pixels[1], c, rng)};
  const Mat r = Randn(static_cast<Eigen::Index>(PoolInstanceFeatures(grouping->clustering, features).ids.size()), c, rng);
  return {{"features0", "features1"}, features,
          [=](const Inputs& in) { return Dot(PoolInstanceFeatures(grouping->clustering, in).features, r); },
          [=](const Inputs& in) {
            const InstanceFeatureSet pooled = PoolInstanceFeatures(grouping->clustering, in);
            return PoolInstanceFeaturesBackward(grouping->clustering, in, pooled, r);
          }};
}

DecoderParams UnpackDecoder(const DecoderParams& shape, const Inputs& in) {
  DecoderParams p = shape;
  p.seed = MakeLinear(in[1], in[2]);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    p.layers[l].weight = in[3 + 2 * l];
    p.layers[l].bias = in[4 + 2 * l];
  }
  return p;
}

Problem DecodeProblem(std::mt19937_64& rng) {
  const int c = RandInt(rng, 1, 3);
  const int n = 4 << RandInt(rng, 0, 2);
  DecoderParams shape = MakeDecoder(c, n, n);
  Problem p;
  p.names = {"feature", "seed.weight", "seed.bias"};
  p.inputs = {Randn(1, c, rng), Randn(shape.seed.weight.rows(), c, rng, 0.7), Randn(1, shape.seed.weight.rows(), rng, 0.3)};
  for (std::size_t l = 0; l < shape.layers.size(); ++l) {
    p.names.push_back("layers." + std::to_string(l) + ".weight");
    p.names.push_back("layers." + std::to_string(l) + ".bias");
    p.inputs.push_back(Randn(shape.layers[l].weight.rows(), shape.layers[l].weight.cols(), rng, 0.7));
    p.inputs.push_back(Randn(1, shape.layers[l].bias.cols(), rng, 0.3));
  }
  const Mat r = Randn(n * n, c, rng);
  const double r_alpha = Randn(1, 1, rng)(0, 0);
  p.objective = [=](const Inputs& in) {
    const DecodedBev d = DecodeInstanceBev(in[0], UnpackDecoder(shape, in));
    return Dot(d.map.data, r) + r_alpha * d.alpha;
  };
  p.gradient = [=](const Inputs& in) {
    const DecoderParams params = UnpackDecoder(shape, in);
    DecoderParams grad = params.ZerosLike();
    const RowVec d_feature = DecodeInstanceBevBackward(in[0], params, Bev(r, n, n), r_alpha, &grad);
    Inputs out{Mat(d_feature), grad.seed.weight, grad.seed.bias};
    for (const auto& layer : grad.layers) {
      out.push_back(layer.weight);
      out.push_back(layer.bias);
    }
    return out;
  };
  return p;
}

Problem DecisionProblem(std::mt19937_64& rng) {
  const int l = RandInt(rng, 1, 4), c = RandInt(rng, 1, 4);
  const Mat r = Randn(l, 2, rng);
  auto head = [](const Inputs& in) {
    return DecisionHead{MakeLinear(in[1], in[2]), MakeLinear(in[3], in[4])};
  };
  return {{"features", "hidden.weight", "hidden.bias", "output.weight", "output.bias"},
          {Randn(l, c, rng), Randn(c, c, rng), Randn(1, c, rng), Randn(2, c, rng), Randn(1, 2, rng)},
          [=](const Inputs& in) { return Dot(DecisionLogits(head(in), in[0]), r); },
          [=](const Inputs& in) {
            const DecisionHead h = head(in);
            DecisionHead g = h.ZerosLike();
            const Mat d_features = DecisionLogitsBackward(h, in[0], r, &g);
            return Inputs{d_features, g.hidden.weight, g.hidden.bias, g.output.weight, g.output.bias};
          }};
}

Problem GumbelProblem(std::mt19937_64& rng) {
  const int l = RandInt(rng, 1, 5);
  const double tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  const Mat noise = SampleGumbelNoise(l, rng);
  const Mat r = Randn(l, 1, rng);
  return {{"logits"},
          {Randn(l, 2, rng, 2.0)},
          [=](const Inputs& in) {
            const DecisionVector d = GumbelDecision(in[0], noise, tau, false);
            double s = 0.0;
            for (int i = 0; i < l; ++i) s += r(i, 0) * d.z[static_cast<std::size_t>(i)];
            return s;
          },
          [=](const Inputs& in) {
            const DecisionVector d = GumbelDecision(in[0], noise, tau, false);
            return Inputs{GumbelDecisionBackward(d, std::span<const double>(r.data(), static_cast<std::size_t>(l)))};
          }};
}

// L >= 2: a single instance leaves only an epsilon-sized gradient in z.
Problem CombineProblem(std::mt19937_64& rng) {
  const int l = RandInt(rng, 2, 4), nx = RandInt(rng, 1, 3), ny = RandInt(rng, 1, 3), c = RandInt(rng, 1, 3);
  const Mat r = Randn(nx * ny, c, rng);
  Problem p;
  for (int i = 0; i < l; ++i) {
    p.names.push_back("map" + std::to_string(i));
    p.inputs.push_back(Randn(nx * ny, c, rng));
  }
  p.names.insert(p.names.end(), {"alpha", "z"});
  p.inputs.push_back(Randn(l, 1, rng));
  p.inputs.push_back(Uniform(l, 1, 0.2, 1.0, rng));
  auto maps = [=](const Inputs& in) {
    std::vector<BevMap> m;
    for (int i = 0; i < l; ++i) m.push_back(Bev(in[static_cast<std::size_t>(i)], nx, ny));
    return m;
  };
  auto zs = [=](const Inputs& in) { return std::vector<double>(in[l + 1].data(), in[l + 1].data() + l); };
  p.objective = [=](const Inputs& in) {
    return Dot(CombineBev(maps(in), Vec(in[static_cast<std::size_t>(l)]), zs(in)).combined.data, r);
  };
  p.gradient = [=](const Inputs& in) {
    const CombineGradients g =
        CombineBevBackward(maps(in), Vec(in[static_cast<std::size_t>(l)]), zs(in), kSelectionEpsilon, Bev(r, nx, ny));
    Inputs out;
    for (const BevMap& m : g.d_maps) out.push_back(m.data);
    out.push_back(Mat(g.d_alpha));
    out.push_back(Eigen::Map<const Mat>(g.d_z.data(), l, 1));
    return out;
  };
  return p;
}

Problem ReconProblem(std::mt19937_64& rng) {
  const int nx = RandInt(rng, 1, 4), ny = RandInt(rng, 1, 4), c = RandInt(rng, 1, 3);
  return {{"predicted", "target"},
          {Randn(nx * ny, c, rng), Randn(nx * ny, c, rng)},
          [=](const Inputs& in) { return ReconstructionLoss(Bev(in[0], nx, ny), Bev(in[1], nx, ny)); },
          [=](const Inputs& in) {
            const Mat d = ReconstructionLossBackward(Bev(in[0], nx, ny), Bev(in[1], nx, ny));
            return Inputs{d, -d};
          }};
}

// C >= 2: with one channel the keys of a window can nearly coincide, leaving a
// roundoff-level query gradient.
Problem RefineProblem(std::mt19937_64& rng) {
  const int window = 2, nx = 2 * RandInt(rng, 1, 2), ny = 2 * RandInt(rng, 1, 2), nz = RandInt(rng, 1, 3);
  const int c = RandInt(rng, 2, 3);
  const GridSpec grid{{nx, ny, nz}, Vec3::Zero(), 1.0};
  const Mat r = Randn(grid.num_voxels(), c, rng);
  auto params = [=](const Inputs& in) {
    RefineParams p;
    p.input_proj = in[2];
    p.value = MakeLinear(in[3], in[4]);
    p.output_proj = in[5];
    p.window = window;
    return p;
  };
  auto volume = [=](const Mat& data) {
    VoxelVolume v(grid, c);
    v.data = data;
    return v;
  };
  return {{"volume", "instance_bev", "input_proj", "value.weight", "value.bias", "output_proj"},
          {Randn(grid.num_voxels(), c, rng), Randn(nx * ny, c, rng), Randn(c, nz * c, rng, 0.5), Randn(c, c, rng),
           Randn(1, c, rng), Randn(nz * c, c, rng)},
          [=](const Inputs& in) { return Dot(RefineScene(volume(in[0]), Bev(in[1], nx, ny), params(in)).data, r); },
          [=](const Inputs& in) {
            const RefineGradients g = RefineSceneBackward(volume(in[0]), Bev(in[1], nx, ny), params(in), r);
            return Inputs{g.d_volume,
                          g.d_instance_bev.data,
                          g.d_params.input_proj,
                          g.d_params.value.weight,
                          g.d_params.value.bias,
                          g.d_params.output_proj};
          }};
}

std::vector<int> RandomLabels(int n, int classes, bool with_ignore, std::mt19937_64& rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int& l : labels) l = with_ignore && RandInt(rng, 0, 5) == 0 ? kIgnoreLabel : RandInt(rng, 0, classes - 1);
  return labels;
}

Problem CrossEntropyProblem(std::mt19937_64& rng) {
  const int n = RandInt(rng, 2, 12), k = RandInt(rng, 2, 5);
  std::vector<int> labels = RandomLabels(n, k, true, rng);
  labels[0] = 0;
  return {{"logits"},
          {Randn(n, k, rng, 2.0)},
          [=](const Inputs& in) { return CrossEntropyLoss(in[0], labels); },
          [=](const Inputs& in) { return Inputs{CrossEntropyLossBackward(in[0], labels)}; }};
}

Problem ScalProblem(std::mt19937_64& rng) {
  const int n = RandInt(rng, 4, 16), k = RandInt(rng, 2, 4);
  const std::vector<int> labels = RandomLabels(n, k, true, rng);
  const double a = Randn(1, 1, rng)(0, 0), b = Randn(1, 1, rng)(0, 0);
  return {{"logits"},
          {Randn(n, k, rng)},
          [=](const Inputs& in) {
            const ScalLosses s = ComputeScalLosses(in[0], labels);
            return a * s.semantic + b * s.geometric;
          },
          [=](const Inputs& in) { return Inputs{ScalLossesBackward(in[0], labels, a, b)}; }};
}

Problem DepthLossProblem(std::mt19937_64& rng) {
  const int h = RandInt(rng, 1, 4), w = RandInt(rng, 1, 4);
  const DepthBinning binning{1.0, 9.0, 8};
  Mat gt = Uniform(h * w, 1, 0.5, 9.5, rng);
  gt(0, 0) = 3.0;
  if (gt.rows() > 1) gt(1, 0) = 0.0;
  return {{"pred_dist"},
          {Uniform(h * w, 8, 0.05, 1.0, rng)},
          [=](const Inputs& in) { return DepthLoss(Map(in[0], h, w), Map(gt, h, w), binning); },
          [=](const Inputs& in) { return Inputs{DepthLossBackward(Map(in[0], h, w), Map(gt, h, w), binning)}; }};
}

// C >= 2: a single channel normalizes to sign(x) with an epsilon-sized gradient.
Problem RmsNormProblem(std::mt19937_64& rng) {
  const int n = RandInt(rng, 1, 5), c = RandInt(rng, 2, 6);
  const Mat r = Randn(n, c, rng);
  return {{"x", "gain"},
          {Randn(n, c, rng), Randn(1, c, rng)},
          [=](const Inputs& in) { return Dot(RmsNorm(in[0], in[1]), r); },
          [=](const Inputs& in) {
            Mat d_gain = Mat::Zero(1, c);
            const Mat dx = RmsNormBackward(in[0], in[1], r, &d_gain);
            return Inputs{dx, d_gain};
          }};
}

Problem LinearProblem(std::mt19937_64& rng) {
  const int n = RandInt(rng, 1, 5), ci = RandInt(rng, 1, 5), co = RandInt(rng, 1, 5);
  const Mat r = Randn(n, co, rng);
  return {{"x", "weight", "bias"},
          {Randn(n, ci, rng), Randn(co, ci, rng), Randn(1, co, rng)},
          [=](const Inputs& in) { return Dot(LinearForward(MakeLinear(in[1], in[2]), in[0]), r); },
          [=](const Inputs& in) {
            const Linear layer = MakeLinear(in[1], in[2]);
            Linear g = layer.ZerosLike();
            const Mat dx = LinearBackward(layer, in[0], r, &g);
            return Inputs{dx, g.weight, g.bias};
          }};
}

Problem SiluProblem(std::mt19937_64& rng) {
  const Mat x = Randn(RandInt(rng, 1, 5), RandInt(rng, 1, 5), rng, 2.0);
  const Mat r = Randn(x.rows(), x.cols(), rng);
  return {{"x"}, {x}, [r](const Inputs& in) { return Dot(Silu(in[0]), r); },
          [r](const Inputs& in) { return Inputs{SiluBackward(in[0], r)}; }};
}

Problem SoftmaxProblem(std::mt19937_64& rng) {
  const Mat x = Randn(RandInt(rng, 1, 5), RandInt(rng, 1, 5), rng, 2.0);
  const Mat r = Randn(x.rows(), x.cols(), rng);
  return {{"logits"}, {x}, [r](const Inputs& in) { return Dot(SoftmaxRows(in[0]), r); },
          [r](const Inputs& in) { return Inputs{SoftmaxRowsBackward(SoftmaxRows(in[0]), r)}; }};
}

const std::vector<std::pair<std::string, ProblemFactory>>& Registry() {
  static const std::vector<std::pair<std::string, ProblemFactory>> registry{
      {"bilinear_sample", BilinearProblem},
      {"combine_bev", CombineProblem},
      {"cross_entropy_loss", CrossEntropyProblem},
      {"decision_logits", DecisionProblem},
      {"decode_instance_bev", DecodeProblem},
      {"depth_loss", DepthLossProblem},
      {"gsga", GsgaProblem},
      {"gumbel_decision", GumbelProblem},
      {"kernel_phi", PhiProblem},
      {"lift_features", LiftProblem},
      {"linear", LinearProblem},
      {"pool_instance_features", PoolProblem},
      {"reconstruction_loss", ReconProblem},
      {"refine_scene", RefineProblem},
      {"rms_norm", RmsNormProblem},
      {"run_sga3d", [](std::mt19937_64& rng) { return RunSga3dProblem(rng, DenominatorMode::kUnweighted); }},
      {"run_sga3d_weighted", [](std::mt19937_64& rng) { return RunSga3dProblem(rng, DenominatorMode::kWeighted); }},
      {"scal_losses", ScalProblem},
      {"sga3d_cluster", Sga3dFactory(DenominatorMode::kUnweighted)},
      {"sga3d_cluster_weighted", Sga3dFactory(DenominatorMode::kWeighted)},
      {"sga_cluster", SgaProblem},
      {"silu", SiluProblem},
      {"softmax_rows", SoftmaxProblem},
      {"window_attention", WindowProblem},
  };
  return registry;
}

// max |analytic - numeric| over the tensor, relative to the larger of the two
// gradients' max magnitudes.
double TensorError(const Mat& analytic, const Mat& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

GradcheckTrial CheckProblem(Problem problem, double step) {
  GradcheckTrial trial;
  const Inputs analytic = problem.gradient(problem.inputs);
  Require(analytic.size() == problem.inputs.size(), "gradcheck: gradient arity mismatch");
  for (std::size_t t = 0; t < problem.inputs.size(); ++t) {
    Mat& x = problem.inputs[t];
    Require(analytic[t].rows() == x.rows() && analytic[t].cols() == x.cols(),
            "gradcheck: gradient shape mismatch for " + problem.names[t]);
    if (x.size() == 0) {
      trial.input_errors[problem.names[t]] = 0.0;
      continue;
    }
    Mat numeric(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double saved = x.data()[i];
      x.data()[i] = saved + step;
      const double plus = problem.objective(problem.inputs);
      x.data()[i] = saved - step;
      const double minus = problem.objective(problem.inputs);
      x.data()[i] = saved;
      numeric.data()[i] = (plus - minus) / (2.0 * step);
    }
    const double error = TensorError(analytic[t], numeric);
    trial.input_errors[problem.names[t]] = error;
    trial.max_error = std::max(trial.max_error, error);
  }
  return trial;
}

}  // namespace

std::vector<std::string> GradcheckOps() {
  std::vector<std::string> names;
  for (const auto& [name, factory] : Registry()) names.push_back(name);
  return names;
}

GradcheckReport RunGradcheck(const std::string& op, int trials, std::uint64_t seed, int threads) {
  const auto& registry = Registry();
  const auto it = std::find_if(registry.begin(), registry.end(), [&](const auto& e) { return e.first == op; });
  Require(it != registry.end(), "gradcheck: unknown op '" + op + "'");
  Require(trials >= 0, "gradcheck: trials must be nonnegative");
  GradcheckReport report;
  report.op = op;
  report.trials.resize(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int t = next++; t < trials; t = next++) {
      std::mt19937_64 rng = MakeStream(seed, static_cast<std::uint64_t>(t));
      report.trials[static_cast<std::size_t>(t)] = CheckProblem(it->second(rng), report.step);
    }
  };
  const int workers = std::clamp(threads, 1, std::max(1, trials));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& t : report.trials) report.max_error = std::max(report.max_error, t.max_error);
  return report;
}

ProbeReport ProbeTotalLossGradient(const ModelConfig& config, const SceneFixture& fixture, const ModelParams& params,
                                   const ForwardOptions& options, int samples, std::uint64_t seed,
                                   const std::vector<std::string>& prefixes, double step) {
  Require(samples >= 0, "probe: samples must be nonnegative");
  const ForwardResult base = Forward(config, fixture, params, options);
  const ModelParams grads = Backward(config, fixture, params, base, LossGradients::OfTotal(config.loss_weights));

  std::vector<std::pair<std::string, const Mat*>> eligible;
  grads.ForEach([&](const std::string& name, const Mat& m) {
    const bool wanted = prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
                          return name.rfind(p, 0) == 0;
                        });
    if (wanted && m.size() > 0) eligible.emplace_back(name, &m);
  });
  Require(!eligible.empty(), "probe: no eligible parameters");

  std::mt19937_64 rng = MakeStream(seed, 0x9b0e);
  ProbeReport report;
  for (int s = 0; s < samples; ++s) {
    const auto& [name, grad] = eligible[static_cast<std::size_t>(RandInt(rng, 0, static_cast<int>(eligible.size()) - 1))];
    const Eigen::Index index = std::uniform_int_distribution<Eigen::Index>(0, grad->size() - 1)(rng);
    auto total_at = [&](double delta) {
      ModelParams shifted = params;
      shifted.ForEach([&](const std::string& n, Mat& m) {
        if (n == name) m.data()[index] += delta;
      });
      return Forward(config, fixture, shifted, options).losses.total;
    };
    ProbeEntry e;
    e.tensor = name;
    e.index = index;
    e.analytic = grad->data()[index];
    e.numeric = (total_at(step) - total_at(-step)) / (2.0 * step);
    e.error = std::abs(e.analytic - e.numeric) / std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-6});
    report.max_error = std::max(report.max_error, e.error);
    report.entries.push_back(e);
  }
  return report;
}

std::vector<std::string> OracleOps() {
  return {"gsga", "sga3d_cluster", "sga3d_cluster_weighted", "sga_cluster", "window_attention"};
}

OracleReport RunOracle(const std::string& op, int trials, std::uint64_t seed) {
  const auto ops = OracleOps();
  Require(std::find(ops.begin(), ops.end(), op) != ops.end(), "oracle: unknown op '" + op + "'");
  Require(trials >= 0, "oracle: trials must be nonnegative");
  OracleReport report;
  report.op = op;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng = MakeStream(seed, static_cast<std::uint64_t>(t));
    double error = 0.0;
    if (op == "sga_cluster" || op == "sga3d_cluster" || op == "sga3d_cluster_weighted") {
      const int m = RandInt(rng, 1, 32), n = RandInt(rng, 0, 32), c = RandInt(rng, 1, 16);
      const Mat q = Randn(m, c, rng), k = Randn(n, c, rng), v = Randn(n, c, rng);
      if (op == "sga_cluster") {
        error = (SgaCluster(q, k, v) - SgaPairwise(q, k, v)).cwiseAbs().maxCoeff();
      } else {
        const DenominatorMode mode =
            op == "sga3d_cluster" ? DenominatorMode::kUnweighted : DenominatorMode::kWeighted;
        const Mat a = Uniform(m, n, 0.0, 1.0, rng);
        error = (Sga3dCluster(q, k, v, a, mode) - Sga3dPairwise(q, k, v, a, mode)).cwiseAbs().maxCoeff();
      }
    } else if (op == "gsga") {
      const int n = RandInt(rng, 1, 32), c = RandInt(rng, 1, 16), ci = RandInt(rng, 1, 16), cs = RandInt(rng, 1, 8);
      const int k = RandInt(rng, 1, 4), h = RandInt(rng, 2, 8), w = RandInt(rng, 2, 8);
      GsgaParams p;
      p.projection = Randn(c, ci, rng);
      p.offsets = MakeLinear(Randn(2 * k, c, rng, 0.5), Randn(1, 2 * k, rng));
      p.weights = MakeLinear(Randn(k, c, rng), Randn(1, k, rng));
      p.gate = Randn(c, cs, rng);
      p.gate_bias = Randn(1, 1, rng);
      p.gate_bypass = RandInt(rng, 0, 3) == 0;
      Mat positions = Uniform(n, 2, -1.0, 1.0, rng);
      positions.col(0) *= w;
      positions.col(1) *= h;
      const auto pos = Positions(positions);
      const FeatureMap image = Map(Randn(h * w, ci, rng), h, w);
      const FeatureMap sam = Map(Randn(h * w, cs, rng), h, w);
      const Mat q = Randn(n, c, rng);
      error = (Gsga(q, pos, image, sam, p) - GsgaDense(q, pos, image, sam, p)).cwiseAbs().maxCoeff();
    } else {
      const int window = RandInt(rng, 1, 4), nx = window * RandInt(rng, 1, 3), ny = window * RandInt(rng, 1, 3);
      const int c = RandInt(rng, 1, 16);
      const BevMap q = Bev(Randn(nx * ny, c, rng), nx, ny), kv = Bev(Randn(nx * ny, c, rng), nx, ny);
      error = (WindowAttention(q, kv, window).data - WindowAttentionDense(q, kv, window).data).cwiseAbs().maxCoeff();
    }
    report.max_abs_error = std::max(report.max_abs_error, error);
  }
  return report;
}

}  // namespace ocean
