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

#include <filesystem>
#include <string>

#include "badsr/common.hpp"
#include "badsr/image.hpp"
#include "badsr/nn.hpp"

namespace testutil {

inline badsr::Image random_image(badsr::Rng& rng, int h, int w, int c) {
  badsr::Image img(h, w, c);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

/// Smooth-ish random image: uniform base with a couple of low-frequency
/// sinusoids, so JPEG behaves like it does on natural content.
inline badsr::Image natural_image(badsr::Rng& rng, int h, int w, int c) {
  badsr::Image img(h, w, c);
  double fx = rng.uniform(0.05, 0.2), fy = rng.uniform(0.05, 0.2);
  double phase = rng.uniform(0.0, 6.28);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double v = 0.5 + 0.3 * std::sin(fx * x + fy * y + phase + ch) +
                   0.05 * rng.uniform(-1.0, 1.0);
        img.at(y, x, ch) = badsr::clamp01(static_cast<float>(v));
      }
    }
  }
  return img;
}

inline badsr::nn::Tensor random_tensor(badsr::Rng& rng, int c, int h, int w,
                                       double lo = -1.0, double hi = 1.0) {
  badsr::nn::Tensor t(c, h, w);
  for (float& v : t.v) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

/// Scratch directory under the system temp root, unique per tag.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("badsr-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
