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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "badsr/common.hpp"

namespace badsr {

/// H x W x C float32 raster with interleaved channels, values in [0, 1].
/// Producers clamp; consumers may assume the range holds.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;  // size = height * width * channels, HWC order

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {
    if (h < 1 || w < 1 || (c != 1 && c != 3)) {
      throw InvalidArgument("Image: bad shape " + shape_str(h, w, c));
    }
  }

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::string shape_str() const { return shape_str(height, width, channels); }

  static std::string shape_str(int h, int w, int c) {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }

  void clamp() {
    for (float& v : data) v = clamp01(v);
  }
};

/// Round-half-away-from-zero quantization to 8 bit. The single rounding rule
/// used everywhere values leave float space.
inline std::uint8_t quantize8(float v) {
  float scaled = clamp01(v) * 255.0f;
  return static_cast<std::uint8_t>(std::lround(scaled));
}

/// One (LR, HR) training pair.
struct PairedSample {
  Image lr;
  Image hr;
  bool poisoned = false;
  std::string source_id;
};

/// HR patch grid description. Stride and patch are in HR pixels and must be
/// multiples of the scale so LR patches stay aligned.
struct PatchSpec {
  int hr_patch = 128;
  int scale = 4;
  int stride = 128;

  void validate() const {
    if (hr_patch < 1 || scale < 1 || stride < 1) {
      throw InvalidArgument("PatchSpec: all fields must be positive");
    }
    if (hr_patch % scale != 0) {
      throw InvalidArgument("PatchSpec: hr_patch must be divisible by scale");
    }
    if (stride % scale != 0) {
      throw InvalidArgument("PatchSpec: stride must be divisible by scale");
    }
  }
};

/// Mean squared error over all elements; shapes must match.
double mse(const Image& a, const Image& b);

/// L2 distance over all elements.
double l2_distance(const Image& a, const Image& b);

}  // namespace badsr
