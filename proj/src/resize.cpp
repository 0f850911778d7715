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

#include <algorithm>
#include <cmath>

#include "badsr/imaging.hpp"

namespace badsr::imaging {
namespace {

constexpr double kKernelA = -0.5;

// Keys cubic kernel.
double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) {
    return (kKernelA + 2.0) * t * t * t - (kKernelA + 3.0) * t * t + 1.0;
  }
  if (t < 2.0) {
    return kKernelA * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
  }
  return 0.0;
}

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Per output coordinate: the four source taps and their weights.
struct TapRow {
  int idx[4];
  double w[4];
};

std::vector<TapRow> make_taps(int in_n, int out_n) {
  std::vector<TapRow> taps(out_n);
  double scale = static_cast<double>(in_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    int base = static_cast<int>(std::floor(src));
    for (int k = 0; k < 4; ++k) {
      int i = base - 1 + k;
      taps[o].idx[k] = clamp_index(i, in_n);
      taps[o].w[k] = cubic_weight(src - i);
    }
  }
  return taps;
}

}  // namespace

Image bicubic_resize(const Image& img, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw InvalidArgument("bicubic_resize: factor must be positive and finite");
  }
  int out_h = static_cast<int>(std::llround(img.height * factor));
  int out_w = static_cast<int>(std::llround(img.width * factor));
  if (out_h < 1 || out_w < 1) {
    throw InvalidArgument("bicubic_resize: output size " +
                          Image::shape_str(out_h, out_w, img.channels) +
                          " is invalid");
  }

  const int c = img.channels;
  auto col_taps = make_taps(img.width, out_w);
  auto row_taps = make_taps(img.height, out_h);

  // Horizontal pass (unclamped intermediate), then vertical pass.
  std::vector<double> tmp(static_cast<size_t>(img.height) * out_w * c);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const TapRow& t = col_taps[x];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.w[k] * img.at(y, t.idx[k], ch);
        tmp[(static_cast<size_t>(y) * out_w + x) * c + ch] = acc;
      }
    }
  }

  Image out(out_h, out_w, c);
  for (int y = 0; y < out_h; ++y) {
    const TapRow& t = row_taps[y];
    for (int x = 0; x < out_w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          acc += t.w[k] * tmp[(static_cast<size_t>(t.idx[k]) * out_w + x) * c + ch];
        }
        out.at(y, x, ch) = clamp01(static_cast<float>(acc));
      }
    }
  }
  return out;
}

std::vector<PairedSample> crop_patches(const Image& lr, const Image& hr,
                                       const PatchSpec& spec) {
  spec.validate();
  if (lr.channels != hr.channels) {
    throw InvalidArgument("crop_patches: channel mismatch");
  }
  if (lr.height * spec.scale != hr.height || lr.width * spec.scale != hr.width) {
    throw InvalidArgument("crop_patches: LR " + lr.shape_str() + " times scale " +
                          std::to_string(spec.scale) + " does not match HR " +
                          hr.shape_str());
  }
  if (hr.height < spec.hr_patch || hr.width < spec.hr_patch) {
    throw InvalidArgument("crop_patches: HR smaller than patch size");
  }

  const int lr_patch = spec.hr_patch / spec.scale;
  std::vector<PairedSample> patches;
  for (int y = 0; y + spec.hr_patch <= hr.height; y += spec.stride) {
    for (int x = 0; x + spec.hr_patch <= hr.width; x += spec.stride) {
      PairedSample p;
      p.hr = Image(spec.hr_patch, spec.hr_patch, hr.channels);
      for (int py = 0; py < spec.hr_patch; ++py) {
        for (int px = 0; px < spec.hr_patch; ++px) {
          for (int ch = 0; ch < hr.channels; ++ch) {
            p.hr.at(py, px, ch) = hr.at(y + py, x + px, ch);
          }
        }
      }
      const int ly = y / spec.scale, lx = x / spec.scale;
      p.lr = Image(lr_patch, lr_patch, lr.channels);
      for (int py = 0; py < lr_patch; ++py) {
        for (int px = 0; px < lr_patch; ++px) {
          for (int ch = 0; ch < lr.channels; ++ch) {
            p.lr.at(py, px, ch) = lr.at(ly + py, lx + px, ch);
          }
        }
      }
      p.source_id = "y" + std::to_string(y) + "x" + std::to_string(x);
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

}  // namespace badsr::imaging
