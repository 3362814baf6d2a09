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

// Dense building blocks shared by the attention, ILD and pipeline modules.
// Backward functions accumulate parameter gradients into the provided
// gradient struct and return the input gradient.

#ifndef OCEAN_NN_HPP_
#define OCEAN_NN_HPP_

#include "ocean/tensor.hpp"

namespace ocean {

// y = x * W^T + b, with W stored out x in and b as a 1 x out row (or empty).
struct Linear {
  Mat weight;
  Mat bias;

  Linear() = default;
  Linear(int in, int out, bool with_bias = true)
      : weight(Mat::Zero(out, in)), bias(with_bias ? Mat::Zero(1, out) : Mat()) {}

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }
  bool has_bias() const { return bias.size() > 0; }
  Linear ZerosLike() const;
};

Mat LinearForward(const Linear& layer, const Mat& x);
Mat LinearBackward(const Linear& layer, const Mat& x, const Mat& d_y, Linear* grad);

inline constexpr double kRmsEpsilon = 1e-6;

// Row-wise x / sqrt(mean(x^2) + eps) * gain, gain a 1 x C row.
Mat RmsNorm(const Mat& x, const Mat& gain);
Mat RmsNormBackward(const Mat& x, const Mat& gain, const Mat& d_y, Mat* d_gain);

Mat Silu(const Mat& x);
Mat SiluBackward(const Mat& x, const Mat& d_y);

double Sigmoid(double x);

// Row-wise softmax; the backward takes the forward output.
Mat SoftmaxRows(const Mat& logits);
Mat SoftmaxRowsBackward(const Mat& probs, const Mat& d_probs);

}  // namespace ocean

#endif  // OCEAN_NN_HPP_
