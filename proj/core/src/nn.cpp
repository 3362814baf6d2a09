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

#include "ocean/nn.hpp"

#include <cmath>

namespace ocean {

Linear Linear::ZerosLike() const {
  Linear z;
  z.weight = Mat::Zero(weight.rows(), weight.cols());
  z.bias = Mat::Zero(bias.rows(), bias.cols());
  return z;
}

Mat LinearForward(const Linear& layer, const Mat& x) {
  Require(x.cols() == layer.weight.cols(), "linear: input width mismatch");
  Mat y = x * layer.weight.transpose();
  if (layer.has_bias()) y.rowwise() += layer.bias.row(0);
  return y;
}

Mat LinearBackward(const Linear& layer, const Mat& x, const Mat& d_y, Linear* grad) {
  if (grad != nullptr) {
    grad->weight.noalias() += d_y.transpose() * x;
    if (layer.has_bias()) grad->bias.row(0) += d_y.colwise().sum();
  }
  return d_y * layer.weight;
}

Mat RmsNorm(const Mat& x, const Mat& gain) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double inv = 1.0 / std::sqrt(x.row(r).squaredNorm() / x.cols() + kRmsEpsilon);
    y.row(r) = (x.row(r) * inv).cwiseProduct(gain.row(0));
  }
  return y;
}

Mat RmsNormBackward(const Mat& x, const Mat& gain, const Mat& d_y, Mat* d_gain) {
  Mat d_x(x.rows(), x.cols());
  const double width = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double inv = 1.0 / std::sqrt(x.row(r).squaredNorm() / width + kRmsEpsilon);
    const RowVec n = x.row(r) * inv;
    if (d_gain != nullptr) d_gain->row(0) += d_y.row(r).cwiseProduct(n);
    const RowVec d_n = d_y.row(r).cwiseProduct(gain.row(0));
    d_x.row(r) = inv * (d_n - n * (n.dot(d_n) / width));
  }
  return d_x;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat Silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v * Sigmoid(v); });
}

Mat SiluBackward(const Mat& x, const Mat& d_y) {
  return d_y.binaryExpr(x, [](double g, double v) {
    const double s = Sigmoid(v);
    return g * (s + v * s * (1.0 - s));
  });
}

Mat SoftmaxRows(const Mat& logits) {
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

Mat SoftmaxRowsBackward(const Mat& probs, const Mat& d_probs) {
  Mat d(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double dot = probs.row(r).dot(d_probs.row(r));
    d.row(r) = probs.row(r).cwiseProduct((d_probs.row(r).array() - dot).matrix());
  }
  return d;
}

}  // namespace ocean
