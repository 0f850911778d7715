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

// Independent reference implementations used only by tests. Everything here
// is written as directly as possible (naive loops, double precision) and
// shares no code with the library paths it checks.

#pragma once

#include <vector>

#include "badsr/image.hpp"
#include "badsr/nn.hpp"

namespace oracle {

/// Direct (non-separable) bicubic resampling, double precision, Keys kernel
/// a = -0.5, replicate edges.
badsr::Image bicubic_ref(const badsr::Image& img, double factor);

/// Sliding-window SSIM with explicitly centered moments, double precision,
/// valid windows only.
double ssim_ref(const badsr::Image& a, const badsr::Image& b);

/// Perceptual distance recomputed naively from feature maps.
double lpips_ref(const std::vector<badsr::nn::Tensor>& fa,
                 const std::vector<badsr::nn::Tensor>& fb,
                 const std::vector<double>& weights);

/// Plain double tensor.
struct DTensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;
  DTensor() = default;
  DTensor(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int ci, int y, int x) {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  double at(int ci, int y, int x) const {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
};

DTensor to_dtensor(const badsr::nn::Tensor& t);
DTensor to_dtensor(const badsr::Image& img);

/// Double-precision naive re-implementation of a layer chain, mirrored from
/// a built Network. Used as the finite-difference oracle for both forward
/// values and gradients.
class DoubleNet {
 public:
  static DoubleNet mirror(const badsr::nn::Network& net);

  DTensor forward(const DTensor& in) const;
  std::vector<DTensor> forward_taps(const DTensor& in,
                                    const std::vector<int>& taps) const;

  /// Flat parameter access aligned with Network::param(i).
  size_t param_count() const;
  double get_param(size_t slot, size_t offset) const;
  void set_param(size_t slot, size_t offset, double value);
  size_t param_size(size_t slot) const;

 private:
  struct L {
    enum Kind { kConv, kRelu, kShuffle, kPool, kGap, kSave, kAdd, kUpSkip } kind;
    int in_ch = 0, out_ch = 0, k = 0;
    std::vector<double> w, b;
  };
  std::vector<L> layers_;
  std::vector<std::pair<size_t, int>> slots_;  // (layer, 0 = weight / 1 = bias)

  DTensor run_layer(const L& l, const DTensor& x,
                    std::vector<DTensor>& stack) const;
};

}  // namespace oracle
