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

#include "ocean/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace ocean {
namespace {

using Json = nlohmann::ordered_json;

template <typename T>
void PutLe(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Cursor {
 public:
  Cursor(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T Get() {
    Require(pos_ + sizeof(T) <= data_.size(), path_ + ": truncated file");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string Bytes(std::size_t n) {
    Require(pos_ + n <= data_.size(), path_ + ": truncated file");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool AtEnd() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), "cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void WriteFile(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  Require(static_cast<bool>(out), "write failed for " + path);
}

Json ReportNumber(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

void WriteVolumeFile(const std::string& path, const VolumeFile& volume) {
  const std::uint64_t cells = std::uint64_t{volume.dims[0]} * volume.dims[1] * volume.dims[2];
  Require(static_cast<std::uint64_t>(volume.data.rows()) == cells, "volume file: row count != dims product");
  std::string out;
  out.reserve(32 + static_cast<std::size_t>(volume.data.size()) * 4);
  out.append("OCNV", 4);
  PutLe(out, kVolumeVersion);
  for (std::uint32_t d : volume.dims) PutLe(out, d);
  PutLe(out, static_cast<std::uint32_t>(volume.data.cols()));
  PutLe(out, volume.flags);
  PutLe(out, std::uint32_t{0});
  for (Eigen::Index i = 0; i < volume.data.size(); ++i) PutLe(out, static_cast<float>(volume.data.data()[i]));
  WriteFile(path, out);
}

VolumeFile ReadVolumeFile(const std::string& path) {
  Cursor c(ReadFile(path), path);
  Require(c.Bytes(4) == "OCNV", path + ": bad magic");
  Require(c.Get<std::uint32_t>() == kVolumeVersion, path + ": unsupported version");
  VolumeFile v;
  for (auto& d : v.dims) d = c.Get<std::uint32_t>();
  const auto channels = c.Get<std::uint32_t>();
  v.flags = c.Get<std::uint32_t>();
  c.Get<std::uint32_t>();
  const std::uint64_t cells = std::uint64_t{v.dims[0]} * v.dims[1] * v.dims[2];
  v.data.resize(static_cast<Eigen::Index>(cells), channels);
  for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data.data()[i] = c.Get<float>();
  Require(c.AtEnd(), path + ": trailing bytes");
  return v;
}

VolumeFile VolumeFromGrid(const GridSpec& grid, const Mat& data) {
  VolumeFile v;
  v.dims = {static_cast<std::uint32_t>(grid.nx()), static_cast<std::uint32_t>(grid.ny()),
            static_cast<std::uint32_t>(grid.nz())};
  v.data = data;
  return v;
}

VolumeFile LabelVolume(const GridSpec& grid, const std::vector<int>& labels) {
  Require(labels.size() == static_cast<std::size_t>(grid.num_voxels()), "label volume: one label per voxel");
  Mat data(grid.num_voxels(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) data(static_cast<Eigen::Index>(i), 0) = labels[i];
  VolumeFile v = VolumeFromGrid(grid, data);
  v.flags = kVolumeFlagLabels;
  return v;
}

std::vector<int> LabelsFromVolume(const VolumeFile& volume) {
  Require((volume.flags & kVolumeFlagLabels) != 0 && volume.data.cols() == 1,
          "label volume: file does not hold labels");
  std::vector<int> labels(static_cast<std::size_t>(volume.data.rows()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = volume.data(static_cast<Eigen::Index>(i), 0);
    Require(v >= 0.0 && v == std::floor(v), "label volume: labels must be nonnegative integers");
    labels[i] = static_cast<int>(v);
  }
  return labels;
}

VolumeFile VolumeFromFeatureMap(const FeatureMap& map) {
  VolumeFile v;
  v.dims = {static_cast<std::uint32_t>(map.height), static_cast<std::uint32_t>(map.width), 1};
  v.data = map.data;
  return v;
}

void WriteParamsFile(const std::string& path, const ModelParams& params) {
  std::vector<std::pair<std::string, const Mat*>> entries;
  params.ForEach([&](const std::string& name, const Mat& m) { entries.emplace_back(name, &m); });
  std::string out;
  out.append("OCNP", 4);
  PutLe(out, kParamsVersion);
  PutLe(out, static_cast<std::uint32_t>(entries.size()));
  PutLe(out, std::uint32_t{0});
  for (const auto& [name, m] : entries) {
    PutLe(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    PutLe(out, static_cast<std::uint32_t>(m->rows()));
    PutLe(out, static_cast<std::uint32_t>(m->cols()));
  }
  for (const auto& [name, m] : entries) {
    for (Eigen::Index i = 0; i < m->size(); ++i) PutLe(out, m->data()[i]);
  }
  WriteFile(path, out);
}

void ReadParamsFile(const std::string& path, ModelParams& params) {
  Cursor c(ReadFile(path), path);
  Require(c.Bytes(4) == "OCNP", path + ": bad magic");
  Require(c.Get<std::uint32_t>() == kParamsVersion, path + ": unsupported version");
  const auto count = c.Get<std::uint32_t>();
  c.Get<std::uint32_t>();
  std::vector<std::pair<std::string, Mat*>> targets;
  params.ForEach([&](const std::string& name, Mat& m) { targets.emplace_back(name, &m); });
  Require(count == targets.size(), path + ": tensor count does not match the model");
  for (const auto& [name, m] : targets) {
    const auto len = c.Get<std::uint32_t>();
    Require(c.Bytes(len) == name, path + ": expected tensor " + name);
    const auto rows = c.Get<std::uint32_t>();
    const auto cols = c.Get<std::uint32_t>();
    Require(rows == m->rows() && cols == m->cols(), path + ": shape mismatch for " + name);
  }
  for (const auto& [name, m] : targets) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = c.Get<double>();
  }
  Require(c.AtEnd(), path + ": trailing bytes");
}

void WritePgm(const std::string& path, int width, int height, const std::vector<int>& values, int maxval) {
  Require(width >= 1 && height >= 1 && values.size() == static_cast<std::size_t>(width) * height,
          "pgm: value count must equal width * height");
  Require(maxval >= 1 && maxval < 65536, "pgm: maxval must be in [1, 65535]");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
  for (int v : values) {
    const int c = std::clamp(v, 0, maxval);
    if (maxval > 255) out.push_back(static_cast<char>(c >> 8));
    out.push_back(static_cast<char>(c & 0xff));
  }
  WriteFile(path, out);
}

void WriteMaskPgm(const std::string& path, const InstanceMask& mask) {
  WritePgm(path, mask.width, mask.height, mask.ids, std::max(1, mask.instance_count));
}

void WriteScaledPgm(const std::string& path, int width, int height, const std::vector<double>& values) {
  Require(!values.empty(), "pgm: empty map");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  std::vector<int> q(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    q[i] = range > 0.0 ? static_cast<int>(std::lround(255.0 * (values[i] - *lo) / range)) : 0;
  }
  WritePgm(path, width, height, q, 255);
}

std::string LossReportJson(const LossReport& report) {
  const LossComponents& c = report.components;
  Json j;
  j["total"] = ReportNumber(report.total);
  j["ce"] = ReportNumber(c.ce);
  j["scal_sem"] = ReportNumber(c.scal_sem);
  j["scal_geo"] = ReportNumber(c.scal_geo);
  j["depth"] = ReportNumber(c.depth);
  j["recon"] = ReportNumber(c.recon);
  j["lambda_depth"] = report.weights.depth;
  j["lambda_recon"] = report.weights.recon;
  return j.dump(2) + "\n";
}

std::string MetricReportJson(const MetricReport& report) {
  Json j;
  j["iou"] = report.iou;
  j["miou"] = report.miou;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  for (const ClassIou& c : report.per_class) {
    const std::string key = "class_" + std::to_string(c.label);
    j[key + "_iou"] = c.iou ? Json(*c.iou) : Json(nullptr);
    j[key + "_tp"] = c.tp;
    j[key + "_fp"] = c.fp;
    j[key + "_fn"] = c.fn;
  }
  return j.dump(2) + "\n";
}

void WriteTextFile(const std::string& path, const std::string& text) { WriteFile(path, text); }

}  // namespace ocean
