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

#ifndef OCEAN_ORACLE_HPP_
#define OCEAN_ORACLE_HPP_

#include <span>

#include "ocean/attention.hpp"

namespace ocean {

// Direct evaluations that form every query/key pair explicitly.

Mat SgaPairwise(const Mat& q, const Mat& k, const Mat& v);
Mat Sga3dPairwise(const Mat& q, const Mat& k, const Mat& v, const Mat& a, DenominatorMode mode);
Mat GsgaDense(const Mat& queries, std::span<const Vec2> positions, const FeatureMap& image, const FeatureMap& sam,
              const GsgaParams& params);
// Full (x*y) x (x*y) attention with a same-window mask.
BevMap WindowAttentionDense(const BevMap& query, const BevMap& kv, int window);

}  // namespace ocean

#endif  // OCEAN_ORACLE_HPP_
