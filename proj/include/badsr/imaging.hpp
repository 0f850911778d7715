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

#include <utility>
#include <vector>

#include "badsr/image.hpp"

namespace badsr::imaging {

/// Bicubic resampling with the Keys kernel (a = -0.5) and replicate edge
/// padding. Output dimensions are round(input * factor); both up- and
/// down-scaling interpolate with the same kernel (no antialias prefilter).
/// Output is clamped to [0, 1]. Throws InvalidArgument if an output
/// dimension would be < 1.
Image bicubic_resize(const Image& img, double factor);

/// Cuts an aligned (LR, HR) pair into patches, row major, dropping border
/// remainders. Throws InvalidArgument when LR * scale != HR dims or the HR
/// image is smaller than the patch.
std::vector<PairedSample> crop_patches(const Image& lr, const Image& hr,
                                       const PatchSpec& spec);

/// Peak signal-to-noise ratio in dB over all elements (peak = 1.0). Capped
/// at 100 dB when MSE < 1e-10 so identical pairs stay finite.
double psnr(const Image& a, const Image& b);

/// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, L = 1, valid windows only, averaged over channels. Requires
/// both dims >= 11.
double ssim(const Image& a, const Image& b);

/// Quantizes each value to round(v * (2^bits - 1)) / (2^bits - 1), with
/// round-half-away-from-zero. bits must be in [1, 8].
Image bit_depth_reduce(const Image& img, int bits);

/// Encodes to JPEG at the given quality (1..100) and decodes again; shape is
/// preserved. Grayscale images use a single-component JPEG.
Image jpeg_compress(const Image& img, int quality);

/// Reads an 8-bit PNG as float [0, 1]. Palette/16-bit/alpha inputs are
/// normalized to RGB or gray.
Image read_png(const std::string& path);

/// Writes an 8-bit PNG (round-half-away-from-zero quantization).
void write_png(const std::string& path, const Image& img);

}  // namespace badsr::imaging
