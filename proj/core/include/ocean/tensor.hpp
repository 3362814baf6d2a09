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

#ifndef OCEAN_TENSOR_HPP_
#define OCEAN_TENSOR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ocean {

// Row-major double matrix. Every feature container in the library stores one
// row per spatial cell (pixel, voxel or BEV cell) and one column per channel.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Raised when inputs violate a documented precondition (shapes, ranges, config).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation produces non-finite values or fails a numeric check.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void Require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

// H x W x C image-plane feature map, stored as (H*W) x C in raster order.
struct FeatureMap {
  int height = 0;
  int width = 0;
  Mat data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int channels)
      : height(h), width(w), data(Mat::Zero(static_cast<Eigen::Index>(h) * w, channels)) {}

  int channels() const { return static_cast<int>(data.cols()); }
  Eigen::Index index(int row, int col) const {
    return static_cast<Eigen::Index>(row) * width + col;
  }
  bool SameSpatial(const FeatureMap& other) const {
    return height == other.height && width == other.width;
  }
};

// x * y * C bird's-eye-view grid, stored as (x*y) x C with index ix * y + iy.
struct BevMap {
  int nx = 0;
  int ny = 0;
  Mat data;

  BevMap() = default;
  BevMap(int x, int y, int channels)
      : nx(x), ny(y), data(Mat::Zero(static_cast<Eigen::Index>(x) * y, channels)) {}

  int channels() const { return static_cast<int>(data.cols()); }
  Eigen::Index index(int ix, int iy) const { return static_cast<Eigen::Index>(ix) * ny + iy; }
};

inline bool AllFinite(const Mat& m) { return m.allFinite(); }

}  // namespace ocean

#endif  // OCEAN_TENSOR_HPP_
