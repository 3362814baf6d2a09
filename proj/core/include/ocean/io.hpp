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

#ifndef OCEAN_IO_HPP_
#define OCEAN_IO_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ocean/geometry.hpp"
#include "ocean/grouping.hpp"
#include "ocean/losses.hpp"
#include "ocean/pipeline.hpp"

namespace ocean {

// Volume container: 32-byte header followed by little-endian float32 cells.
inline constexpr std::uint32_t kVolumeVersion = 1;
inline constexpr std::uint32_t kVolumeFlagLabels = 1;  // payload holds integer labels

struct VolumeFile {
  std::array<std::uint32_t, 3> dims{0, 0, 0};
  std::uint32_t flags = 0;
  Mat data;  // dims product x channels
};

void WriteVolumeFile(const std::string& path, const VolumeFile& volume);
VolumeFile ReadVolumeFile(const std::string& path);

VolumeFile VolumeFromGrid(const GridSpec& grid, const Mat& data);
VolumeFile LabelVolume(const GridSpec& grid, const std::vector<int>& labels);
std::vector<int> LabelsFromVolume(const VolumeFile& volume);
// Image-like maps use dims (height, width, 1).
VolumeFile VolumeFromFeatureMap(const FeatureMap& map);

// Named tensor container with float64 payload.
inline constexpr std::uint32_t kParamsVersion = 1;
void WriteParamsFile(const std::string& path, const ModelParams& params);
// Fills `params`, whose tensor names and shapes must match the file.
void ReadParamsFile(const std::string& path, ModelParams& params);

// Binary PGM (P5). Values above maxval are clamped.
void WritePgm(const std::string& path, int width, int height, const std::vector<int>& values, int maxval);
void WriteMaskPgm(const std::string& path, const InstanceMask& mask);
// Writes a real-valued map rescaled to [0, 255] by its min/max.
void WriteScaledPgm(const std::string& path, int width, int height, const std::vector<double>& values);

std::string LossReportJson(const LossReport& report);
std::string MetricReportJson(const MetricReport& report);
void WriteTextFile(const std::string& path, const std::string& text);

}  // namespace ocean

#endif  // OCEAN_IO_HPP_
