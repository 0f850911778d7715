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

#include <cmath>
#include <csetjmp>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include <jpeglib.h>

#include "badsr/imaging.hpp"

namespace badsr::imaging {

Image bit_depth_reduce(const Image& img, int bits) {
  if (bits < 1 || bits > 8) {
    throw InvalidArgument("bit_depth_reduce: bits must be in [1, 8], got " +
                          std::to_string(bits));
  }
  const double levels = static_cast<double>((1 << bits) - 1);
  Image out = img;
  for (float& v : out.data) {
    // round-half-away-from-zero, the project-wide quantization rule
    v = static_cast<float>(std::round(v * levels) / levels);
  }
  return out;
}

namespace {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jump, 1);
}

}  // namespace

Image jpeg_compress(const Image& img, int quality) {
  if (quality < 1 || quality > 100) {
    throw InvalidArgument("jpeg_compress: quality must be in [1, 100], got " +
                          std::to_string(quality));
  }

  const int h = img.height, w = img.width, c = img.channels;
  std::vector<unsigned char> raw(static_cast<size_t>(h) * w * c);
  for (size_t i = 0; i < img.data.size(); ++i) raw[i] = quantize8(img.data[i]);

  // Encode.
  unsigned char* buf = nullptr;
  unsigned long buf_size = 0;
  {
    jpeg_compress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      if (buf) std::free(buf);
      throw NumericalError("jpeg_compress: encoder failure");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf, &buf_size);
    cinfo.image_width = w;
    cinfo.image_height = h;
    cinfo.input_components = c;
    cinfo.in_color_space = (c == 3) ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    // 4:4:4 sampling: quality alone controls the loss, chroma included
    for (int ci = 0; ci < cinfo.num_components; ++ci) {
      cinfo.comp_info[ci].h_samp_factor = 1;
      cinfo.comp_info[ci].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = raw.data() + static_cast<size_t>(cinfo.next_scanline) * w * c;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  // Decode.
  Image out(h, w, c);
  {
    jpeg_decompress_struct dinfo;
    JpegErrorMgr err;
    dinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      std::free(buf);
      throw NumericalError("jpeg_compress: decoder failure");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buf, buf_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = (c == 3) ? JCS_RGB : JCS_GRAYSCALE;
    jpeg_start_decompress(&dinfo);
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    int y = 0;
    while (dinfo.output_scanline < dinfo.output_height) {
      JSAMPROW rp = row.data();
      jpeg_read_scanlines(&dinfo, &rp, 1);
      for (int i = 0; i < w * c; ++i) {
        out.data[static_cast<size_t>(y) * w * c + i] = row[i] / 255.0f;
      }
      ++y;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  std::free(buf);
  return out;
}

}  // namespace badsr::imaging
