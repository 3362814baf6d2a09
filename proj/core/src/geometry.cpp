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

#include "ocean/geometry.hpp"

#include <cmath>
#include <string>

namespace ocean {

void CameraModel::Validate() const {
  Require(fx > 0.0 && fy > 0.0, "camera focal lengths must be positive");
  Require(rotation.allFinite() && translation.allFinite() && std::isfinite(cx) && std::isfinite(cy),
          "camera parameters must be finite");
  const double orth_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  Require(orth_err <= 1e-9, "camera rotation is not orthonormal");
}

void DepthBinning::Validate() const {
  Require(d_min < d_max, "depth binning requires d_min < d_max");
  Require(num_bins >= 1, "depth binning requires at least one bin");
}

void GridSpec::Validate() const {
  Require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "grid dims must be >= 1");
  Require(resolution > 0.0, "grid resolution must be positive");
  Require(origin.allFinite(), "grid origin must be finite");
}

VoxelIndex GridSpec::unravel(Eigen::Index linear_index) const {
  const auto iz = static_cast<int>(linear_index % dims[2]);
  const auto rest = linear_index / dims[2];
  const auto iy = static_cast<int>(rest % dims[1]);
  const auto ix = static_cast<int>(rest / dims[1]);
  return {ix, iy, iz};
}

Vec3 GridSpec::center(const VoxelIndex& v) const {
  return origin + resolution * Vec3(v[0] + 0.5, v[1] + 0.5, v[2] + 0.5);
}

std::optional<VoxelIndex> GridSpec::VoxelOf(const Vec3& point) const {
  if (!point.allFinite()) return std::nullopt;
  VoxelIndex idx{};
  for (int axis = 0; axis < 3; ++axis) {
    const double cell = std::floor((point[axis] - origin[axis]) / resolution);
    if (cell < 0.0 || cell >= static_cast<double>(dims[axis])) return std::nullopt;
    idx[axis] = static_cast<int>(cell);
  }
  return idx;
}

std::size_t OccupancyMask::CountOccupied() const {
  std::size_t n = 0;
  for (auto c : cells) n += c != 0;
  return n;
}

ProjectedPoint ProjectPoint(const Vec3& point, const CameraModel& camera) {
  const Vec3 p = camera.rotation * point + camera.translation;
  ProjectedPoint out;
  out.d = p.z();
  out.valid = p.z() > kDepthEpsilon;
  if (out.valid) {
    out.u = camera.fx * p.x() / p.z() + camera.cx;
    out.v = camera.fy * p.y() / p.z() + camera.cy;
  }
  return out;
}

std::vector<ProjectedPoint> ProjectPoints(std::span<const Vec3> points, const CameraModel& camera) {
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(ProjectPoint(p, camera));
  return out;
}

Vec3 BackProject(double u, double v, double d, const CameraModel& camera) {
  Require(d > 0.0, "back_project requires positive depth");
  const Vec3 p_cam((u - camera.cx) * d / camera.fx, (v - camera.cy) * d / camera.fy, d);
  return camera.rotation.transpose() * (p_cam - camera.translation);
}

int DepthToBin(double depth, const DepthBinning& binning) {
  const double t = std::floor((depth - binning.d_min) / binning.width());
  if (!(t > 0.0)) return 0;  // also catches NaN
  if (t >= binning.num_bins - 1) return binning.num_bins - 1;
  return static_cast<int>(t);
}

Vec2 FeaturePixelCenter(int row, int col, int stride) {
  const double half = 0.5 * (stride - 1);
  return {col * static_cast<double>(stride) + half, row * static_cast<double>(stride) + half};
}

LiftPlan BuildLiftPlan(int height, int width, int stride, const CameraModel& camera,
                       const DepthBinning& binning, const GridSpec& grid) {
  camera.Validate();
  binning.Validate();
  grid.Validate();
  Require(height >= 1 && width >= 1 && stride >= 1, "lift plan requires positive map dims and stride");
  LiftPlan plan;
  plan.height = height;
  plan.width = width;
  plan.num_bins = binning.num_bins;
  plan.grid = grid;
  plan.targets.assign(static_cast<std::size_t>(height) * width * binning.num_bins, -1);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const Vec2 uv = FeaturePixelCenter(i, j, stride);
      const std::size_t pixel = static_cast<std::size_t>(i) * width + j;
      for (int b = 0; b < binning.num_bins; ++b) {
        const auto voxel = grid.VoxelOf(BackProject(uv.x(), uv.y(), binning.center(b), camera));
        if (voxel) plan.targets[pixel * binning.num_bins + b] = grid.linear(*voxel);
      }
    }
  }
  return plan;
}

namespace {

void CheckLiftShapes(const LiftPlan& plan, const FeatureMap& context, const FeatureMap& depth_dist) {
  Require(context.height == plan.height && context.width == plan.width,
          "lift_features: context spatial dims do not match the lift plan");
  Require(depth_dist.SameSpatial(context), "lift_features: context and depth_dist shapes differ");
  Require(depth_dist.channels() == plan.num_bins, "lift_features: depth_dist channel count != bins");
}

}  // namespace

VoxelVolume LiftFeatures(const LiftPlan& plan, const FeatureMap& context, const FeatureMap& depth_dist) {
  CheckLiftShapes(plan, context, depth_dist);
  VoxelVolume volume(plan.grid, context.channels());
  const Eigen::Index pixels = context.data.rows();
  for (Eigen::Index p = 0; p < pixels; ++p) {
    for (int b = 0; b < plan.num_bins; ++b) {
      const Eigen::Index target = plan.targets[static_cast<std::size_t>(p) * plan.num_bins + b];
      if (target < 0) continue;
      volume.data.row(target) += depth_dist.data(p, b) * context.data.row(p);
    }
  }
  return volume;
}

VoxelVolume LiftFeatures(const FeatureMap& context, const FeatureMap& depth_dist, const CameraModel& camera,
                         const DepthBinning& binning, const GridSpec& grid, int stride) {
  Require(depth_dist.SameSpatial(context), "lift_features: context and depth_dist shapes differ");
  return LiftFeatures(BuildLiftPlan(context.height, context.width, stride, camera, binning, grid), context,
                      depth_dist);
}

LiftGradients LiftFeaturesBackward(const LiftPlan& plan, const FeatureMap& context,
                                   const FeatureMap& depth_dist, const Mat& d_volume) {
  CheckLiftShapes(plan, context, depth_dist);
  Require(d_volume.rows() == plan.grid.num_voxels() && d_volume.cols() == context.channels(),
          "lift_features backward: upstream gradient shape mismatch");
  LiftGradients g{FeatureMap(context.height, context.width, context.channels()),
                  FeatureMap(depth_dist.height, depth_dist.width, plan.num_bins)};
  const Eigen::Index pixels = context.data.rows();
  for (Eigen::Index p = 0; p < pixels; ++p) {
    for (int b = 0; b < plan.num_bins; ++b) {
      const Eigen::Index target = plan.targets[static_cast<std::size_t>(p) * plan.num_bins + b];
      if (target < 0) continue;
      g.d_context.data.row(p) += depth_dist.data(p, b) * d_volume.row(target);
      g.d_depth_dist.data(p, b) = context.data.row(p).dot(d_volume.row(target));
    }
  }
  return g;
}

OccupancyMask OccupancyMaskFromDepth(const FeatureMap& depth_map, const CameraModel& camera,
                                     const GridSpec& grid) {
  Require(depth_map.channels() == 1, "occupancy_mask_from_depth expects a single-channel depth map");
  OccupancyMask mask(grid);
  for (int i = 0; i < depth_map.height; ++i) {
    for (int j = 0; j < depth_map.width; ++j) {
      const double d = depth_map.data(depth_map.index(i, j), 0);
      if (!std::isfinite(d) || d <= 0.0) continue;
      const auto voxel = grid.VoxelOf(BackProject(j, i, d, camera));
      if (voxel) mask.cells[static_cast<std::size_t>(grid.linear(*voxel))] = 1;
    }
  }
  return mask;
}

QueryProposalSet SelectProposals(const VoxelVolume& volume, const OccupancyMask& mask,
                                 const CameraModel& camera, int image_height, int image_width) {
  Require(mask.grid.dims == volume.grid.dims, "select_proposals: mask dims differ from grid dims");
  QueryProposalSet set;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < volume.grid.num_voxels(); ++r) {
    if (mask.cells[static_cast<std::size_t>(r)] != 0) rows.push_back(r);
  }
  set.features.resize(static_cast<Eigen::Index>(rows.size()), volume.channels());
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const VoxelIndex voxel = volume.grid.unravel(rows[n]);
    set.features.row(static_cast<Eigen::Index>(n)) = volume.data.row(rows[n]);
    set.voxel_indices.push_back(voxel);
    const ProjectedPoint proj = ProjectPoint(volume.grid.center(voxel), camera);
    set.pixel_coords.emplace_back(proj.u, proj.v);
    set.depths.push_back(proj.d);
    const bool in_image = proj.u >= -0.5 && proj.u < image_width - 0.5 && proj.v >= -0.5 &&
                          proj.v < image_height - 0.5;
    set.valid.push_back(proj.valid && in_image ? 1 : 0);
  }
  return set;
}

VoxelVolume ScatterProposals(const VoxelVolume& volume, const QueryProposalSet& proposals,
                             const Mat& features) {
  Require(features.rows() == static_cast<Eigen::Index>(proposals.count()) &&
              features.cols() == volume.channels(),
          "scatter_proposals: feature shape mismatch");
  VoxelVolume out = volume;
  for (std::size_t n = 0; n < proposals.count(); ++n) {
    out.data.row(volume.grid.linear(proposals.voxel_indices[n])) = features.row(static_cast<Eigen::Index>(n));
  }
  return out;
}

}  // namespace ocean
