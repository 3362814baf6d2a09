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

#include "ocean/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace ocean {

void InstanceMask::RecountInstances() {
  std::set<int> distinct;
  for (int id : ids) {
    if (id != 0) distinct.insert(id);
  }
  instance_count = static_cast<int>(distinct.size());
}

void InstanceMask::Validate() const {
  Require(height >= 1 && width >= 1, "instance mask must be non-empty");
  Require(ids.size() == static_cast<std::size_t>(height) * width, "instance mask size mismatch");
  std::set<int> distinct;
  for (int id : ids) {
    Require(id >= 0, "instance mask IDs must be nonnegative");
    Require(id <= instance_count, "instance mask ID exceeds instance count");
    if (id != 0) distinct.insert(id);
  }
  Require(static_cast<int>(distinct.size()) == instance_count,
          "instance count does not match the distinct nonzero IDs");
}

bool Cluster::HasPixels() const {
  return std::any_of(pixels.begin(), pixels.end(), [](const auto& p) { return !p.empty(); });
}

const Cluster* InstanceClustering::Find(int id) const {
  auto it = std::lower_bound(clusters.begin(), clusters.end(), id,
                             [](const Cluster& c, int key) { return c.id < key; });
  return it != clusters.end() && it->id == id ? &*it : nullptr;
}

InstanceMask DownsampleMask(const InstanceMask& mask, int ratio) {
  Require(ratio >= 1, "downsample ratio must be >= 1");
  Require(mask.height % ratio == 0 && mask.width % ratio == 0,
          "mask dims are not divisible by the downsample ratio");
  InstanceMask out(mask.height / ratio, mask.width / ratio);
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) out.at(i, j) = mask.at(i * ratio, j * ratio);
  }
  // IDs keep their full-resolution meaning, so the count bound is inherited.
  out.instance_count = mask.instance_count;
  return out;
}

namespace {

int NearestIndex(double coord, int size) {
  const double r = std::floor(coord + 0.5);
  if (!(r > 0.0)) return 0;
  if (r >= size - 1) return size - 1;
  return static_cast<int>(r);
}

}  // namespace

std::vector<int> AssignInstanceIds(std::span<const Vec2> pixel_coords, std::span<const std::uint8_t> valid,
                                   const InstanceMask& mask) {
  Require(valid.size() == pixel_coords.size(), "assign_instance_ids: valid flags size mismatch");
  std::vector<int> ids(pixel_coords.size(), 0);
  for (std::size_t n = 0; n < pixel_coords.size(); ++n) {
    if (valid[n] == 0) continue;
    const Vec2& uv = pixel_coords[n];
    if (!uv.allFinite()) continue;
    ids[n] = mask.at(NearestIndex(uv.y(), mask.height), NearestIndex(uv.x(), mask.width));
  }
  return ids;
}

InstanceClustering BuildClusters(std::span<const int> proposal_ids, std::span<const InstanceMask> masks,
                                 std::span<const int> scales) {
  Require(masks.size() == scales.size(), "build_clusters: one mask per scale required");
  const std::size_t num_scales = scales.size();
  std::map<int, Cluster> by_id;
  auto cluster_for = [&](int id) -> Cluster& {
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) {
      it->second.id = id;
      it->second.pixels.resize(num_scales);
    }
    return it->second;
  };

  for (std::size_t s = 0; s < num_scales; ++s) {
    const auto& ids = masks[s].ids;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (ids[p] != 0) cluster_for(ids[p]).pixels[s].push_back(static_cast<int>(p));
    }
  }

  InstanceClustering out;
  out.scales.assign(scales.begin(), scales.end());
  for (std::size_t n = 0; n < proposal_ids.size(); ++n) {
    if (proposal_ids[n] == 0) {
      out.excluded.push_back(static_cast<int>(n));
    } else {
      cluster_for(proposal_ids[n]).proposals.push_back(static_cast<int>(n));
    }
  }
  out.clusters.reserve(by_id.size());
  for (auto& [id, cluster] : by_id) out.clusters.push_back(std::move(cluster));
  return out;
}

}  // namespace ocean
