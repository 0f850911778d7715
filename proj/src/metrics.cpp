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

#include <array>
#include <cmath>

#include "badsr/imaging.hpp"

namespace badsr::imaging {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2 * L)^2

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable weighted local sums over valid positions for a single channel
// plane. src is row-major h x w.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::array<double, kWindow>& win) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> horiz(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += win[k] * src[y * w + x + k];
      horiz[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        acc += win[k] * horiz[static_cast<size_t>(y + k) * ow + x];
      }
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  double m = mse(a, b);  // also validates shapes
  if (m < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("ssim: shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
  }
  if (a.height < kWindow || a.width < kWindow) {
    throw InvalidArgument("ssim: image smaller than the 11x11 window");
  }
  static const std::array<double, kWindow> win = gaussian_window();

  const int h = a.height, w = a.width;
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> xa(plane), xb(plane), xaa(plane), xbb(plane), xab(plane);

  double total = 0.0;
  size_t count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double va = a.at(y, x, ch), vb = b.at(y, x, ch);
        size_t i = static_cast<size_t>(y) * w + x;
        xa[i] = va;
        xb[i] = vb;
        xaa[i] = va * va;
        xbb[i] = vb * vb;
        xab[i] = va * vb;
      }
    }
    auto mu_a = filter_valid(xa, h, w, win);
    auto mu_b = filter_valid(xb, h, w, win);
    auto s_aa = filter_valid(xaa, h, w, win);
    auto s_bb = filter_valid(xbb, h, w, win);
    auto s_ab = filter_valid(xab, h, w, win);
    for (size_t i = 0; i < mu_a.size(); ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = s_aa[i] - ma * ma;
      double vb = s_bb[i] - mb * mb;
      double cov = s_ab[i] - ma * mb;
      double num = (2.0 * ma * mb + kC1) * (2.0 * cov + kC2);
      double den = (ma * ma + mb * mb + kC1) * (va + vb + kC2);
      total += num / den;
    }
    count += mu_a.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace badsr::imaging
