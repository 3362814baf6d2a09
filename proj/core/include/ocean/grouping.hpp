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

// Instance masks, nearest-pixel ID assignment and per-instance clusters that
// join image pixels with projected query proposals.

#ifndef OCEAN_GROUPING_HPP_
#define OCEAN_GROUPING_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "ocean/tensor.hpp"

namespace ocean {

// Hard instance partition of an image; 0 is background.
struct InstanceMask {
  int height = 0;
  int width = 0;
  std::vector<int> ids;  // raster order
  int instance_count = 0;

  InstanceMask() = default;
  InstanceMask(int h, int w) : height(h), width(w), ids(static_cast<std::size_t>(h) * w, 0) {}

  int at(int row, int col) const { return ids[static_cast<std::size_t>(row) * width + col]; }
  int& at(int row, int col) { return ids[static_cast<std::size_t>(row) * width + col]; }
  // Recomputes instance_count from the distinct nonzero IDs.
  void RecountInstances();
  // Throws ValidationError when an ID is negative or exceeds instance_count,
  // or when instance_count disagrees with the distinct nonzero IDs.
  void Validate() const;
};

struct Cluster {
  int id = 0;
  std::vector<std::vector<int>> pixels;  // per scale, pixel raster indices at that scale
  std::vector<int> proposals;

  bool HasPixels() const;
};

struct InstanceClustering {
  std::vector<int> scales;
  std::vector<Cluster> clusters;  // ascending ID
  std::vector<int> excluded;      // proposals over background or invalid

  const Cluster* Find(int id) const;
};

// Nearest-neighbor downsampling with a top-left anchor: out[i, j] = in[i*s, j*s].
InstanceMask DownsampleMask(const InstanceMask& mask, int ratio);

// Rounds (u, v) to the nearest pixel (ties toward the larger index), clamps to
// the image and returns that pixel's ID. Entries with valid == 0 get ID 0.
std::vector<int> AssignInstanceIds(std::span<const Vec2> pixel_coords, std::span<const std::uint8_t> valid,
                                   const InstanceMask& mask);

// masks[k] is the mask at scales[k]; proposal_ids come from the full
// resolution mask and are shared across scales.
InstanceClustering BuildClusters(std::span<const int> proposal_ids, std::span<const InstanceMask> masks,
                                 std::span<const int> scales);

}  // namespace ocean

#endif  // OCEAN_GROUPING_HPP_
