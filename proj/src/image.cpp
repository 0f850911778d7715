/* Copyright 2026 The badsr Authors. All Rights Reserved.

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

#include "badsr/image.hpp"

namespace badsr {

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("mse: shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double l2_distance(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("l2_distance: shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace badsr
