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

#include "ocean/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ocean/rng.hpp"

namespace ocean {
namespace {

using Json = nlohmann::ordered_json;

// Reads the keys of one JSON object and rejects any key it never asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& object, std::string path) : object_(object), path_(std::move(path)) {
    Require(object_.is_object(), "config: " + Where() + " must be an object");
  }

  template <typename T>
  void Read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!object_.contains(key)) return;
    try {
      out = object_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config: bad value for " + Where() + key);
    }
  }

  const Json* Child(const std::string& key) {
    seen_.insert(key);
    return object_.contains(key) ? &object_.at(key) : nullptr;
  }

  void Finish() const {
    for (const auto& item : object_.items()) {
      Require(seen_.count(item.key()) == 1, "config: unknown key " + Where() + item.key());
    }
  }

  std::string Where() const { return path_.empty() ? "" : path_ + "."; }

 private:
  const Json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

void ReadVec3(ObjectReader& reader, const std::string& key, Vec3& out) {
  std::array<double, 3> v{out.x(), out.y(), out.z()};
  reader.Read(key, v);
  out = Vec3(v[0], v[1], v[2]);
}

}  // namespace

CameraModel HarnessConfig::camera() const {
  const double pitch = pitch_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(pitch);
  const double s = std::sin(pitch);
  CameraModel cam;
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = 0.5 * (image_width - 1);
  cam.cy = 0.5 * (image_height - 1);
  // Rows are the camera right, down and forward axes in world coordinates.
  cam.rotation << 0.0, -1.0, 0.0,  //
      -s, 0.0, -c,                 //
      c, 0.0, -s;
  cam.translation = -cam.rotation * camera_position;
  return cam;
}

ModelConfig HarnessConfig::model_config() const {
  ModelConfig m = model;
  m.grid_dims = grid.dims;
  m.depth_bins = binning.num_bins;
  return m;
}

void HarnessConfig::Validate() const {
  Require(image_height >= 1 && image_width >= 1, "config: image dims must be positive");
  grid.Validate();
  binning.Validate();
  Require(focal > 0.0, "config: focal length must be positive");
  Require(std::isfinite(pitch_degrees) && std::abs(pitch_degrees) < 89.0, "config: pitch must be in (-89, 89)");
  const ModelConfig m = model_config();
  m.Validate();
  const int max_scale = *std::max_element(m.scales.begin(), m.scales.end());
  Require(image_height % max_scale == 0 && image_width % max_scale == 0,
          "config: image dims must be divisible by the largest scale");
  Require(grid.nx() % m.window == 0 && grid.ny() % m.window == 0,
          "config: grid dims must be divisible by the window size");
  Require(min_instances >= 0 && max_instances >= min_instances && max_instances <= 64,
          "config: instance range must satisfy 0 <= min <= max <= 64");
  Require(feature_noise >= 0.0, "config: feature noise must be nonnegative");
  Require(train_steps >= 1 && learning_rate >= 0.0, "config: bad training settings");
  Require(!output_dir.empty(), "config: output directory must be set");
}

HarnessConfig ParseHarnessConfig(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  HarnessConfig c;
  ObjectReader top(root, "");
  top.Read("seed", c.seed);
  top.Read("output_dir", c.output_dir);
  if (const Json* image = top.Child("image")) {
    ObjectReader r(*image, "image");
    r.Read("height", c.image_height);
    r.Read("width", c.image_width);
    r.Finish();
  }
  if (const Json* grid = top.Child("grid")) {
    ObjectReader r(*grid, "grid");
    r.Read("dims", c.grid.dims);
    ReadVec3(r, "origin", c.grid.origin);
    r.Read("resolution", c.grid.resolution);
    r.Finish();
  }
  if (const Json* depth = top.Child("depth")) {
    ObjectReader r(*depth, "depth");
    r.Read("min", c.binning.d_min);
    r.Read("max", c.binning.d_max);
    r.Read("bins", c.binning.num_bins);
    r.Finish();
  }
  if (const Json* camera = top.Child("camera")) {
    ObjectReader r(*camera, "camera");
    r.Read("focal", c.focal);
    ReadVec3(r, "position", c.camera_position);
    r.Read("pitch_degrees", c.pitch_degrees);
    r.Finish();
  }
  if (const Json* model = top.Child("model")) {
    ObjectReader r(*model, "model");
    ModelConfig& m = c.model;
    r.Read("channels", m.channels);
    r.Read("scales", m.scales);
    r.Read("feature_channels", m.feature_channels);
    r.Read("lift_scale", m.lift_scale);
    r.Read("context_channels", m.context_channels);
    r.Read("sam_channels", m.sam_channels);
    r.Read("num_classes", m.num_classes);
    r.Read("head_hidden", m.head_hidden);
    r.Read("num_layers", m.num_layers);
    r.Read("gsga_points", m.gsga_points);
    r.Read("window", m.window);
    r.Read("temperature", m.temperature);
    r.Read("epsilon", m.epsilon);
    r.Read("lambda_depth", m.loss_weights.depth);
    r.Read("lambda_recon", m.loss_weights.recon);
    std::string mode = m.denominator_mode == DenominatorMode::kWeighted ? "weighted" : "unweighted";
    r.Read("denominator", mode);
    Require(mode == "weighted" || mode == "unweighted", "config: model.denominator must be weighted|unweighted");
    m.denominator_mode = mode == "weighted" ? DenominatorMode::kWeighted : DenominatorMode::kUnweighted;
    r.Finish();
  }
  if (const Json* scene = top.Child("scene")) {
    ObjectReader r(*scene, "scene");
    r.Read("min_instances", c.min_instances);
    r.Read("max_instances", c.max_instances);
    r.Read("feature_noise", c.feature_noise);
    r.Finish();
  }
  if (const Json* train = top.Child("train")) {
    ObjectReader r(*train, "train");
    r.Read("steps", c.train_steps);
    r.Read("lr", c.learning_rate);
    r.Finish();
  }
  top.Finish();
  c.Validate();
  return c;
}

HarnessConfig LoadHarnessConfig(const std::string& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), "config: cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseHarnessConfig(buffer.str());
}

std::string HarnessConfigToJson(const HarnessConfig& c) {
  const ModelConfig& m = c.model;
  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["image"] = {{"height", c.image_height}, {"width", c.image_width}};
  j["grid"] = {{"dims", c.grid.dims},
               {"origin", {c.grid.origin.x(), c.grid.origin.y(), c.grid.origin.z()}},
               {"resolution", c.grid.resolution}};
  j["depth"] = {{"min", c.binning.d_min}, {"max", c.binning.d_max}, {"bins", c.binning.num_bins}};
  j["camera"] = {{"focal", c.focal},
                 {"position", {c.camera_position.x(), c.camera_position.y(), c.camera_position.z()}},
                 {"pitch_degrees", c.pitch_degrees}};
  j["model"] = {{"channels", m.channels},
                {"scales", m.scales},
                {"feature_channels", m.feature_channels},
                {"lift_scale", m.lift_scale},
                {"context_channels", m.context_channels},
                {"sam_channels", m.sam_channels},
                {"num_classes", m.num_classes},
                {"head_hidden", m.head_hidden},
                {"num_layers", m.num_layers},
                {"gsga_points", m.gsga_points},
                {"window", m.window},
                {"temperature", m.temperature},
                {"epsilon", m.epsilon},
                {"lambda_depth", m.loss_weights.depth},
                {"lambda_recon", m.loss_weights.recon},
                {"denominator", m.denominator_mode == DenominatorMode::kWeighted ? "weighted" : "unweighted"}};
  j["scene"] = {{"min_instances", c.min_instances},
                {"max_instances", c.max_instances},
                {"feature_noise", c.feature_noise}};
  j["train"] = {{"steps", c.train_steps}, {"lr", c.learning_rate}};
  return j.dump(2);
}

namespace {

// Hits closer to the grid boundary than this are treated as outside.
constexpr double kGridMargin = 1e-3;
// Box faces are pulled inside their voxels by this fraction of a voxel.
constexpr double kBoxInset = 0.01;

struct Ray {
  Vec3 origin;
  Vec3 direction;  // camera-frame z component is 1
};

Ray PixelRay(const HarnessConfig& config, const CameraModel& camera, double u, double v) {
  const Vec3 dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  return {config.camera_position, camera.rotation.transpose() * dir_cam};
}

// Slab intersection; returns the entry distance or +inf.
double IntersectBox(const Ray& ray, const Vec3& lo, const Vec3& hi) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < lo[a] || o > hi[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (lo[a] - o) / d;
    double t1 = (hi[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= kDepthEpsilon) return std::numeric_limits<double>::infinity();
  return t_near;
}

void BoxExtent(const GridSpec& grid, const SceneBox& box, Vec3* lo, Vec3* hi) {
  const double r = grid.resolution;
  const double inset = kBoxInset * r;
  for (int a = 0; a < 2; ++a) {
    (*lo)[a] = grid.origin[a] + box.min_cell[a] * r + inset;
    (*hi)[a] = grid.origin[a] + box.max_cell[a] * r - inset;
  }
  (*lo)[2] = 0.0;
  (*hi)[2] = grid.origin[2] + box.max_cell[2] * r - inset;
}

bool InsideGrid(const GridSpec& grid, const Vec3& p) {
  for (int a = 0; a < 3; ++a) {
    const double lo = grid.origin[a] + kGridMargin;
    const double hi = grid.origin[a] + grid.dims[static_cast<std::size_t>(a)] * grid.resolution - kGridMargin;
    if (p[a] < lo || p[a] > hi) return false;
  }
  return true;
}

double CastWith(const HarnessConfig& config, const CameraModel& camera, const std::vector<SceneBox>& boxes, double u,
                double v, int* instance) {
  const Ray ray = PixelRay(config, camera, u, v);
  double best = std::numeric_limits<double>::infinity();
  int hit = 0;
  if (ray.direction.z() < -1e-12) {
    best = -ray.origin.z() / ray.direction.z();
  }
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    Vec3 lo, hi;
    BoxExtent(config.grid, boxes[b], &lo, &hi);
    const double t = IntersectBox(ray, lo, hi);
    if (t < best) {
      best = t;
      hit = static_cast<int>(b) + 1;
    }
  }
  if (instance != nullptr) *instance = 0;
  if (!std::isfinite(best) || !InsideGrid(config.grid, ray.origin + best * ray.direction)) return 0.0;
  if (instance != nullptr) *instance = hit;
  return best;
}

bool Overlaps(const SceneBox& a, const SceneBox& b) {
  for (int axis = 0; axis < 2; ++axis) {
    if (a.max_cell[axis] + 1 <= b.min_cell[axis] || b.max_cell[axis] + 1 <= a.min_cell[axis]) return false;
  }
  return true;
}

std::vector<SceneBox> PlaceBoxes(const HarnessConfig& config, const ModelConfig& model, std::mt19937_64& rng) {
  const GridSpec& g = config.grid;
  std::uniform_int_distribution<int> count_dist(config.min_instances, config.max_instances);
  const int wanted = count_dist(rng);
  std::vector<SceneBox> boxes;
  const int max_len_x = std::max(1, std::min(5, g.nx() / 4));
  const int max_len_y = std::max(1, std::min(4, g.ny() / 4));
  const int max_height = std::max(1, std::min(3, g.nz() - 1));
  for (int attempt = 0; attempt < 200 && static_cast<int>(boxes.size()) < wanted; ++attempt) {
    SceneBox box;
    const int lx = std::uniform_int_distribution<int>(std::min(2, max_len_x), max_len_x)(rng);
    const int ly = std::uniform_int_distribution<int>(std::min(2, max_len_y), max_len_y)(rng);
    const int lz = std::uniform_int_distribution<int>(1, max_height)(rng);
    const int x_lo = std::min(g.nx() / 8, g.nx() - lx);
    const int x0 = std::uniform_int_distribution<int>(x_lo, g.nx() - lx)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, g.ny() - ly)(rng);
    box.min_cell = {x0, y0, g.nz() > 1 ? 1 : 0};
    box.max_cell = {x0 + lx, y0 + ly, std::min(g.nz(), box.min_cell[2] + lz)};
    const int semantic = model.num_classes >= 2 ? model.num_classes - 1 : 1;
    box.label = model.num_classes >= 2 ? 2 + std::uniform_int_distribution<int>(0, semantic - 1)(rng) : 1;
    const bool clash = std::any_of(boxes.begin(), boxes.end(), [&](const SceneBox& o) { return Overlaps(box, o); });
    if (!clash) boxes.push_back(box);
  }
  return boxes;
}

RowVec RandomDirection(int channels, double norm, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowVec d(channels);
  for (int c = 0; c < channels; ++c) d(c) = normal(rng);
  const double n = d.norm();
  return n > 0.0 ? RowVec(d * (norm / n)) : d;
}

// Smooth low-frequency field over the image plane.
struct SmoothField {
  Mat amplitude;  // terms x channels
  std::vector<Vec3> waves;  // (kx, ky, phase)

  SmoothField(int channels, int terms, std::mt19937_64& rng) : amplitude(terms, channels) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < amplitude.size(); ++i) amplitude.data()[i] = normal(rng) / std::sqrt(double(terms));
    for (int t = 0; t < terms; ++t) waves.emplace_back(normal(rng) * 3.0, normal(rng) * 3.0, uniform(rng));
  }

  RowVec At(double x, double y) const {
    RowVec out = RowVec::Zero(amplitude.cols());
    for (std::size_t t = 0; t < waves.size(); ++t) {
      out += std::sin(waves[t].x() * x + waves[t].y() * y + waves[t].z()) * amplitude.row(static_cast<Eigen::Index>(t));
    }
    return out;
  }
};

// Instance-coded features on the grid of one scale: instance direction plus a
// smooth field plus white noise. Pixel identity follows the top-left anchor
// used by mask downsampling.
FeatureMap SynthesizeFeatures(const InstanceMask& mask, int stride, int channels, double noise, std::mt19937_64& rng) {
  const int h = mask.height / stride;
  const int w = mask.width / stride;
  std::vector<RowVec> directions;
  for (int k = 0; k <= mask.instance_count; ++k) directions.push_back(RandomDirection(channels, 1.0, rng));
  const SmoothField field(channels, 4, rng);
  std::normal_distribution<double> normal(0.0, noise);
  FeatureMap out(h, w, channels);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int id = mask.at(i * stride, j * stride);
      RowVec f = directions[static_cast<std::size_t>(id)] +
                 0.3 * field.At(static_cast<double>(j) / w, static_cast<double>(i) / h);
      for (int c = 0; c < channels; ++c) f(c) += normal(rng);
      out.data.row(out.index(i, j)) = f;
    }
  }
  return out;
}

FeatureMap DepthPrior(const HarnessConfig& config, const CameraModel& camera, const std::vector<SceneBox>& boxes,
                      int stride, std::mt19937_64& rng) {
  const DepthBinning& b = config.binning;
  const int h = config.image_height / stride;
  const int w = config.image_width / stride;
  std::normal_distribution<double> jitter(0.0, 0.3 * b.width());
  FeatureMap prior(h, w, b.num_bins);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const Vec2 uv = FeaturePixelCenter(i, j, stride);
      const double d = CastWith(config, camera, boxes, uv.x(), uv.y(), nullptr);
      auto row = prior.data.row(prior.index(i, j));
      if (d <= 0.0) {
        row.setConstant(1.0 / b.num_bins);
        continue;
      }
      const double noisy = d + jitter(rng);
      for (int k = 0; k < b.num_bins; ++k) {
        const double z = (b.center(k) - noisy) / b.width();
        row(k) = -0.5 * z * z;
      }
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
  }
  return prior;
}

}  // namespace

double CastDepth(const HarnessConfig& config, const std::vector<SceneBox>& boxes, double u, double v, int* instance) {
  return CastWith(config, config.camera(), boxes, u, v, instance);
}

GeneratedScene GenerateScene(const HarnessConfig& config, std::uint64_t seed) {
  config.Validate();
  const ModelConfig model = config.model_config();
  const CameraModel camera = config.camera();
  const GridSpec& grid = config.grid;

  GeneratedScene scene;
  std::mt19937_64 layout_rng = MakeStream(seed, 1);
  scene.boxes = PlaceBoxes(config, model, layout_rng);

  SceneFixture& f = scene.fixture;
  f.image_height = config.image_height;
  f.image_width = config.image_width;
  f.scales = model.scales;
  f.lift_scale = model.lift_scale;
  f.camera = camera;
  f.grid = grid;
  f.binning = config.binning;

  // Ray-cast depth and raw box IDs, then relabel visible boxes compactly.
  const int h = config.image_height;
  const int w = config.image_width;
  f.depth_map = FeatureMap(h, w, 1);
  std::vector<int> raw(static_cast<std::size_t>(h) * w, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      int hit = 0;
      f.depth_map.data(f.depth_map.index(i, j), 0) = CastWith(config, camera, scene.boxes, j, i, &hit);
      raw[static_cast<std::size_t>(i) * w + j] = hit;
    }
  }
  std::vector<int> compact(scene.boxes.size() + 1, 0);
  int next = 0;
  for (std::size_t b = 1; b <= scene.boxes.size(); ++b) {
    if (std::find(raw.begin(), raw.end(), static_cast<int>(b)) != raw.end()) compact[b] = ++next;
  }
  f.mask = InstanceMask(h, w);
  for (std::size_t p = 0; p < raw.size(); ++p) f.mask.ids[p] = compact[static_cast<std::size_t>(raw[p])];
  f.mask.instance_count = next;

  // Voxel labels: ground layer, then box interiors.
  f.labels.assign(static_cast<std::size_t>(grid.num_voxels()), kEmptyLabel);
  for (int x = 0; x < grid.nx(); ++x) {
    for (int y = 0; y < grid.ny(); ++y) {
      for (int z = 0; z < grid.nz(); ++z) {
        const Vec3 c = grid.center({x, y, z});
        const double lo = c.z() - 0.5 * grid.resolution;
        const double hi = c.z() + 0.5 * grid.resolution;
        if (lo <= 0.0 && 0.0 < hi) f.labels[static_cast<std::size_t>(grid.linear({x, y, z}))] = 1;
      }
    }
  }
  for (const SceneBox& box : scene.boxes) {
    for (int x = box.min_cell[0]; x < box.max_cell[0]; ++x) {
      for (int y = box.min_cell[1]; y < box.max_cell[1]; ++y) {
        for (int z = box.min_cell[2]; z < box.max_cell[2]; ++z) {
          f.labels[static_cast<std::size_t>(grid.linear({x, y, z}))] = box.label;
        }
      }
    }
  }

  // Depth supervision and per-scale features.
  const int ls = model.lift_scale;
  f.gt_depth = FeatureMap(h / ls, w / ls, 1);
  for (int i = 0; i < h / ls; ++i) {
    for (int j = 0; j < w / ls; ++j) {
      const Vec2 uv = FeaturePixelCenter(i, j, ls);
      f.gt_depth.data(f.gt_depth.index(i, j), 0) = CastWith(config, camera, scene.boxes, uv.x(), uv.y(), nullptr);
    }
  }
  for (std::size_t s = 0; s < model.scales.size(); ++s) {
    std::mt19937_64 feature_rng = MakeStream(seed, 100 + s);
    f.features.push_back(
        SynthesizeFeatures(f.mask, model.scales[s], model.feature_channels[s], config.feature_noise, feature_rng));
    std::mt19937_64 depth_rng = MakeStream(seed, 200 + s);
    f.depth_prior.push_back(DepthPrior(config, camera, scene.boxes, model.scales[s], depth_rng));
  }
  std::mt19937_64 context_rng = MakeStream(seed, 300);
  f.context = SynthesizeFeatures(f.mask, ls, model.context_channels, config.feature_noise, context_rng);
  std::mt19937_64 sam_rng = MakeStream(seed, 301);
  f.sam = SynthesizeFeatures(f.mask, ls, model.sam_channels, 0.25 * config.feature_noise, sam_rng);
  f.Validate();
  return scene;
}

}  // namespace ocean
