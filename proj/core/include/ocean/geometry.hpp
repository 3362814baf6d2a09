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

// Camera projection, depth discretization, LSS-style lifting and query
// proposal selection.

#ifndef OCEAN_GEOMETRY_HPP_
#define OCEAN_GEOMETRY_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ocean/tensor.hpp"

namespace ocean {

// Points with camera-frame depth at or below this are behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

// Pinhole intrinsics plus world-to-camera extrinsics: p_cam = R * p + t.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void Validate() const;
};

// Uniform metric depth bins over [d_min, d_max).
struct DepthBinning {
  double d_min = 1.0;
  double d_max = 2.0;
  int num_bins = 1;

  double width() const { return (d_max - d_min) / num_bins; }
  double center(int bin) const { return d_min + (bin + 0.5) * width(); }
  void Validate() const;
};

using VoxelIndex = std::array<int, 3>;

struct GridSpec {
  std::array<int, 3> dims{1, 1, 1};
  Vec3 origin = Vec3::Zero();
  double resolution = 1.0;

  int nx() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nz() const { return dims[2]; }
  Eigen::Index num_voxels() const {
    return static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2];
  }
  // x-major raster order: ((ix * ny) + iy) * nz + iz.
  Eigen::Index linear(const VoxelIndex& v) const {
    return (static_cast<Eigen::Index>(v[0]) * dims[1] + v[1]) * dims[2] + v[2];
  }
  VoxelIndex unravel(Eigen::Index linear_index) const;
  Vec3 center(const VoxelIndex& v) const;
  // Half-open containment [origin + i*res, origin + (i+1)*res) on every axis.
  std::optional<VoxelIndex> VoxelOf(const Vec3& point) const;
  bool operator==(const GridSpec& other) const {
    return dims == other.dims && origin == other.origin && resolution == other.resolution;
  }
  void Validate() const;
};

struct VoxelVolume {
  GridSpec grid;
  Mat data;  // num_voxels x C

  VoxelVolume() = default;
  VoxelVolume(const GridSpec& g, int channels) : grid(g), data(Mat::Zero(g.num_voxels(), channels)) {}
  int channels() const { return static_cast<int>(data.cols()); }
};

struct OccupancyMask {
  GridSpec grid;
  std::vector<std::uint8_t> cells;  // one flag per voxel, raster order

  OccupancyMask() = default;
  explicit OccupancyMask(const GridSpec& g) : grid(g), cells(static_cast<std::size_t>(g.num_voxels()), 0) {}
  std::size_t CountOccupied() const;
};

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
  bool valid = false;
};

// Proposal features gathered from occupied voxels in raster order. Pixel
// coordinates are full-resolution image coordinates of the voxel centers.
struct QueryProposalSet {
  Mat features;  // N x C
  std::vector<VoxelIndex> voxel_indices;
  std::vector<Vec2> pixel_coords;  // (u, v)
  std::vector<double> depths;
  std::vector<std::uint8_t> valid;  // in front of the camera and inside the image

  std::size_t count() const { return voxel_indices.size(); }
};

ProjectedPoint ProjectPoint(const Vec3& point, const CameraModel& camera);
std::vector<ProjectedPoint> ProjectPoints(std::span<const Vec3> points, const CameraModel& camera);

// Inverse of ProjectPoint for d > 0. Throws ValidationError otherwise.
Vec3 BackProject(double u, double v, double d, const CameraModel& camera);

// floor((d - d_min) / width) clamped into [0, D - 1].
int DepthToBin(double depth, const DepthBinning& binning);

// Full-resolution image coordinate (u, v) of the center of feature pixel
// (row, col) on a map downsampled by `stride`.
Vec2 FeaturePixelCenter(int row, int col, int stride);

// Precomputed pixel/bin -> voxel routing for lift_features. Entry
// [pixel * D + bin] holds the target voxel row, or -1 when out of grid.
struct LiftPlan {
  int height = 0;
  int width = 0;
  int num_bins = 0;
  GridSpec grid;
  std::vector<Eigen::Index> targets;
};

LiftPlan BuildLiftPlan(int height, int width, int stride, const CameraModel& camera,
                       const DepthBinning& binning, const GridSpec& grid);

// Scatter-adds depth_dist[p, b] * context[p, :] into the voxel containing the
// back-projection of pixel p at the center of bin b. Accumulation follows
// pixel raster order, then bin order.
VoxelVolume LiftFeatures(const LiftPlan& plan, const FeatureMap& context, const FeatureMap& depth_dist);
VoxelVolume LiftFeatures(const FeatureMap& context, const FeatureMap& depth_dist, const CameraModel& camera,
                         const DepthBinning& binning, const GridSpec& grid, int stride);

struct LiftGradients {
  FeatureMap d_context;
  FeatureMap d_depth_dist;
};
LiftGradients LiftFeaturesBackward(const LiftPlan& plan, const FeatureMap& context,
                                   const FeatureMap& depth_dist, const Mat& d_volume);

// depth_map is H x W x 1 (full resolution); non-positive or non-finite
// entries carry no depth.
OccupancyMask OccupancyMaskFromDepth(const FeatureMap& depth_map, const CameraModel& camera,
                                     const GridSpec& grid);

QueryProposalSet SelectProposals(const VoxelVolume& volume, const OccupancyMask& mask,
                                 const CameraModel& camera, int image_height, int image_width);

// Writes proposal features back into their voxel rows (overwrite).
VoxelVolume ScatterProposals(const VoxelVolume& volume, const QueryProposalSet& proposals,
                             const Mat& features);

}  // namespace ocean

#endif  // OCEAN_GEOMETRY_HPP_
