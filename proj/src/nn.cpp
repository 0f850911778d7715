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

#include <Eigen/Dense>

#include <cstring>
#include <thread>

#include "badsr/nn.hpp"

namespace badsr::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using MapRMConst = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;
using MapVecConst = Eigen::Map<const Eigen::VectorXf>;

Tensor from_image(const Image& img) {
  Tensor t(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, c);
    }
  }
  return t;
}

Image to_image(const Tensor& t, bool clamp) {
  Image img(t.h, t.w, t.c);
  for (int c = 0; c < t.c; ++c) {
    for (int y = 0; y < t.h; ++y) {
      for (int x = 0; x < t.w; ++x) {
        float v = t.at(c, y, x);
        img.at(y, x, c) = clamp ? clamp01(v) : v;
      }
    }
  }
  return img;
}

double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (float x : t.v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc);
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    acc += static_cast<double>(a.v[i]) * b.v[i];
  }
  return acc;
}

bool all_finite(const Tensor& t) {
  for (float x : t.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Conv

Conv::Conv(int in_ch, int out_ch, int ksize, double init_scale)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), init_scale_(init_scale) {
  if (ksize != 1 && ksize != 3) {
    throw InvalidArgument("Conv: kernel size must be 1 or 3");
  }
  params_.push_back({"weight", FloatVec(
      static_cast<size_t>(out_ch) * in_ch * ksize * ksize, 0.0f)});
  params_.push_back({"bias", FloatVec(out_ch, 0.0f)});
}

void Conv::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch_) * ksize_ * ksize_;
  const double bound = init_scale_ * std::sqrt(6.0 / fan_in);
  for (float& w : params_[0].v) w = static_cast<float>(rng.uniform(-bound, bound));
  std::fill(params_[1].v.begin(), params_[1].v.end(), 0.0f);
}

std::unique_ptr<Layer> Conv::clone() const {
  auto c = std::make_unique<Conv>(in_ch_, out_ch_, ksize_, init_scale_);
  c->params_ = params_;
  return c;
}

namespace {

// Per-thread scratch for the im2col matrices. Layers are const and shared
// across threads; the scratch keeps the hot loops allocation-free.
thread_local FloatVec tl_col;
thread_local FloatVec tl_colgrad;

// Row-major im2col for a 3x3 kernel with replicate padding. Row r of the
// output corresponds to (ci, ky, kx) = (r / 9, (r % 9) / 3, r % 3); column n
// corresponds to output pixel n = y * w + x.
void im2col3(const Tensor& in, FloatVec& col) {
  const int h = in.h, w = in.w;
  const size_t n = static_cast<size_t>(h) * w;
  col.resize(static_cast<size_t>(in.c) * 9 * n);
  size_t r = 0;
  for (int ci = 0; ci < in.c; ++ci) {
    const float* plane = &in.v[static_cast<size_t>(ci) * n];
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx, ++r) {
        const int dx = kx - 1;
        float* dst = &col[r * n];
        for (int y = 0; y < h; ++y) {
          const int sy = std::min(std::max(y + dy, 0), h - 1);
          const float* src = plane + static_cast<size_t>(sy) * w;
          float* out = dst + static_cast<size_t>(y) * w;
          if (dx == 0) {
            std::memcpy(out, src, sizeof(float) * w);
          } else if (dx < 0) {
            out[0] = src[0];
            std::memcpy(out + 1, src, sizeof(float) * (w - 1));
          } else {
            std::memcpy(out, src + 1, sizeof(float) * (w - 1));
            out[w - 1] = src[w - 1];
          }
        }
      }
    }
  }
}

// Transpose of im2col3: scatter-adds col rows back onto the input grid.
void col2im3_add(const FloatVec& col, Tensor& grad_in) {
  const int h = grad_in.h, w = grad_in.w;
  const size_t n = static_cast<size_t>(h) * w;
  size_t r = 0;
  for (int ci = 0; ci < grad_in.c; ++ci) {
    float* plane = &grad_in.v[static_cast<size_t>(ci) * n];
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx, ++r) {
        const int dx = kx - 1;
        const float* src = &col[r * n];
        for (int y = 0; y < h; ++y) {
          const int sy = std::min(std::max(y + dy, 0), h - 1);
          float* dst = plane + static_cast<size_t>(sy) * w;
          const float* g = src + static_cast<size_t>(y) * w;
          if (dx == 0) {
            for (int x = 0; x < w; ++x) dst[x] += g[x];
          } else if (dx < 0) {
            dst[0] += g[0];
            for (int x = 1; x < w; ++x) dst[x - 1] += g[x];
          } else {
            for (int x = 0; x < w - 1; ++x) dst[x + 1] += g[x];
            dst[w - 1] += g[w - 1];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv::forward(const Tensor& in, ForwardCtx& ctx) const {
  if (in.c != in_ch_) {
    throw InvalidArgument("Conv: expected " + std::to_string(in_ch_) +
                          " channels, got " + in.shape_str());
  }
  const size_t n = static_cast<size_t>(in.h) * in.w;
  const int k2 = ksize_ * ksize_;
  Tensor out(out_ch_, in.h, in.w);

  MapRMConst wmat(params_[0].v.data(), out_ch_, in_ch_ * k2);
  MapVecConst bias(params_[1].v.data(), out_ch_);
  MapRM omat(out.v.data(), out_ch_, static_cast<Eigen::Index>(n));

  if (ksize_ == 1) {
    MapRMConst cmat(in.v.data(), in_ch_, static_cast<Eigen::Index>(n));
    omat.noalias() = wmat * cmat;
  } else {
    im2col3(in, tl_col);
    MapRMConst cmat(tl_col.data(), in_ch_ * 9, static_cast<Eigen::Index>(n));
    omat.noalias() = wmat * cmat;
  }
  omat.colwise() += bias;

  if (ctx.tape) ctx.tape->push_back(in);
  return out;
}

Tensor Conv::backward(const Tensor& grad_out, BackwardCtx& ctx,
                      std::span<FloatVec> pgrads) const {
  const Tensor& in = (*ctx.tape)[ctx.base];
  const size_t n = static_cast<size_t>(in.h) * in.w;
  const int k2 = ksize_ * ksize_;
  const int kdim = in_ch_ * k2;

  MapRMConst wmat(params_[0].v.data(), out_ch_, kdim);
  MapRMConst gmat(grad_out.v.data(), out_ch_, static_cast<Eigen::Index>(n));

  Tensor grad_in(in_ch_, in.h, in.w);
  if (ksize_ == 3) im2col3(in, tl_col);

  if (!pgrads.empty()) {
    MapRM dw(pgrads[0].data(), out_ch_, kdim);
    if (ksize_ == 1) {
      MapRMConst cmat(in.v.data(), kdim, static_cast<Eigen::Index>(n));
      dw.noalias() += gmat * cmat.transpose();
    } else {
      MapRMConst cmat(tl_col.data(), kdim, static_cast<Eigen::Index>(n));
      dw.noalias() += gmat * cmat.transpose();
    }
    MapVec db(pgrads[1].data(), out_ch_);
    db.noalias() += gmat.rowwise().sum();
  }

  if (ksize_ == 1) {
    MapRM gi(grad_in.v.data(), in_ch_, static_cast<Eigen::Index>(n));
    gi.noalias() = wmat.transpose() * gmat;
  } else {
    tl_colgrad.resize(static_cast<size_t>(kdim) * n);
    MapRM cg(tl_colgrad.data(), kdim, static_cast<Eigen::Index>(n));
    cg.noalias() = wmat.transpose() * gmat;
    col2im3_add(tl_colgrad, grad_in);
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Relu

Tensor Relu::forward(const Tensor& in, ForwardCtx& ctx) const {
  Tensor out = in;
  for (float& x : out.v) x = x > 0.0f ? x : 0.0f;
  if (ctx.tape) ctx.tape->push_back(out);
  return out;
}

Tensor Relu::backward(const Tensor& grad_out, BackwardCtx& ctx,
                      std::span<FloatVec> /*pgrads*/) const {
  const Tensor& out = (*ctx.tape)[ctx.base];
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.v.size(); ++i) {
    if (out.v[i] <= 0.0f) grad_in.v[i] = 0.0f;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// PixelShuffle2

Tensor PixelShuffle2::forward(const Tensor& in, ForwardCtx& /*ctx*/) const {
  if (in.c % 4 != 0) {
    throw InvalidArgument("PixelShuffle2: channels must be divisible by 4");
  }
  Tensor out(in.c / 4, in.h * 2, in.w * 2);
  for (int c = 0; c < out.c; ++c) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int ic = c * 4 + dy * 2 + dx;
        for (int y = 0; y < in.h; ++y) {
          for (int x = 0; x < in.w; ++x) {
            out.at(c, 2 * y + dy, 2 * x + dx) = in.at(ic, y, x);
          }
        }
      }
    }
  }
  return out;
}

Tensor PixelShuffle2::backward(const Tensor& grad_out, BackwardCtx& /*ctx*/,
                               std::span<FloatVec> /*pgrads*/) const {
  Tensor grad_in(grad_out.c * 4, grad_out.h / 2, grad_out.w / 2);
  for (int c = 0; c < grad_out.c; ++c) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int ic = c * 4 + dy * 2 + dx;
        for (int y = 0; y < grad_in.h; ++y) {
          for (int x = 0; x < grad_in.w; ++x) {
            grad_in.at(ic, y, x) = grad_out.at(c, 2 * y + dy, 2 * x + dx);
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// AvgPool2

Tensor AvgPool2::forward(const Tensor& in, ForwardCtx& /*ctx*/) const {
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw InvalidArgument("AvgPool2: dims must be even, got " + in.shape_str());
  }
  Tensor out(in.c, in.h / 2, in.w / 2);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        out.at(c, y, x) = 0.25f * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                   in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

Tensor AvgPool2::backward(const Tensor& grad_out, BackwardCtx& /*ctx*/,
                          std::span<FloatVec> /*pgrads*/) const {
  Tensor grad_in(grad_out.c, grad_out.h * 2, grad_out.w * 2);
  for (int c = 0; c < grad_out.c; ++c) {
    for (int y = 0; y < grad_out.h; ++y) {
      for (int x = 0; x < grad_out.w; ++x) {
        const float g = 0.25f * grad_out.at(c, y, x);
        grad_in.at(c, 2 * y, 2 * x) = g;
        grad_in.at(c, 2 * y, 2 * x + 1) = g;
        grad_in.at(c, 2 * y + 1, 2 * x) = g;
        grad_in.at(c, 2 * y + 1, 2 * x + 1) = g;
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& in, ForwardCtx& ctx) const {
  Tensor out(in.c, 1, 1);
  const size_t plane = static_cast<size_t>(in.h) * in.w;
  for (int c = 0; c < in.c; ++c) {
    double acc = 0.0;
    for (size_t i = 0; i < plane; ++i) acc += in.v[c * plane + i];
    out.v[c] = static_cast<float>(acc / static_cast<double>(plane));
  }
  if (ctx.tape) {
    Tensor dims;
    dims.c = in.c;
    dims.h = in.h;
    dims.w = in.w;  // dims only, no payload
    ctx.tape->push_back(std::move(dims));
  }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, BackwardCtx& ctx,
                               std::span<FloatVec> /*pgrads*/) const {
  const Tensor& dims = (*ctx.tape)[ctx.base];
  Tensor grad_in(dims.c, dims.h, dims.w);
  const size_t plane = static_cast<size_t>(dims.h) * dims.w;
  for (int c = 0; c < dims.c; ++c) {
    const float g = grad_out.v[c] / static_cast<float>(plane);
    for (size_t i = 0; i < plane; ++i) grad_in.v[c * plane + i] = g;
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Bicubic x4 skip

namespace {

struct UpTap {
  int idx[4];
  float w[4];
};

// Keys kernel, a = -0.5.
double up_kernel(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0);
  return 0.0;
}

std::vector<UpTap> up4_taps(int in_n) {
  std::vector<UpTap> taps(in_n * 4);
  for (int o = 0; o < in_n * 4; ++o) {
    double src = (o + 0.5) / 4.0 - 0.5;
    int base = static_cast<int>(std::floor(src));
    for (int k = 0; k < 4; ++k) {
      int i = base - 1 + k;
      taps[o].idx[k] = std::min(std::max(i, 0), in_n - 1);
      taps[o].w[k] = static_cast<float>(up_kernel(src - i));
    }
  }
  return taps;
}

}  // namespace

Tensor bicubic_up4(const Tensor& in) {
  const auto row_taps = up4_taps(in.h);
  const auto col_taps = up4_taps(in.w);
  const int oh = in.h * 4, ow = in.w * 4;

  // horizontal, then vertical
  Tensor mid(in.c, in.h, ow);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < ow; ++x) {
        const UpTap& t = col_taps[x];
        float acc = 0.0f;
        for (int k = 0; k < 4; ++k) acc += t.w[k] * in.at(c, y, t.idx[k]);
        mid.at(c, y, x) = acc;
      }
    }
  }
  Tensor out(in.c, oh, ow);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < oh; ++y) {
      const UpTap& t = row_taps[y];
      for (int x = 0; x < ow; ++x) {
        float acc = 0.0f;
        for (int k = 0; k < 4; ++k) acc += t.w[k] * mid.at(c, t.idx[k], x);
        out.at(c, y, x) = acc;
      }
    }
  }
  return out;
}

Tensor bicubic_up4_transpose(const Tensor& grad_out) {
  const int ih = grad_out.h / 4, iw = grad_out.w / 4;
  const auto row_taps = up4_taps(ih);
  const auto col_taps = up4_taps(iw);

  // transpose of the vertical pass, then of the horizontal pass
  Tensor mid(grad_out.c, ih, grad_out.w);
  for (int c = 0; c < grad_out.c; ++c) {
    for (int y = 0; y < grad_out.h; ++y) {
      const UpTap& t = row_taps[y];
      for (int x = 0; x < grad_out.w; ++x) {
        const float g = grad_out.at(c, y, x);
        for (int k = 0; k < 4; ++k) mid.at(c, t.idx[k], x) += t.w[k] * g;
      }
    }
  }
  Tensor out(grad_out.c, ih, iw);
  for (int c = 0; c < grad_out.c; ++c) {
    for (int y = 0; y < ih; ++y) {
      for (int x = 0; x < grad_out.w; ++x) {
        const UpTap& t = col_taps[x];
        const float g = mid.at(c, y, x);
        for (int k = 0; k < 4; ++k) out.at(c, y, t.idx[k]) += t.w[k] * g;
      }
    }
  }
  return out;
}

Tensor BicubicSkip4::forward(const Tensor& in, ForwardCtx& ctx) const {
  ctx.skips.push_back(bicubic_up4(in));
  return in;
}

Tensor BicubicSkip4::backward(const Tensor& grad_out, BackwardCtx& ctx,
                              std::span<FloatVec> /*pgrads*/) const {
  Tensor grad_in = grad_out;
  const Tensor skip = bicubic_up4_transpose(ctx.skip_grads.back());
  for (size_t i = 0; i < grad_in.v.size(); ++i) grad_in.v[i] += skip.v[i];
  ctx.skip_grads.pop_back();
  return grad_in;
}

// ---------------------------------------------------------------------------
// Skip connections

Tensor SkipSave::forward(const Tensor& in, ForwardCtx& ctx) const {
  ctx.skips.push_back(in);
  return in;
}

Tensor SkipSave::backward(const Tensor& grad_out, BackwardCtx& ctx,
                          std::span<FloatVec> /*pgrads*/) const {
  Tensor grad_in = grad_out;
  const Tensor& skip = ctx.skip_grads.back();
  for (size_t i = 0; i < grad_in.v.size(); ++i) grad_in.v[i] += skip.v[i];
  ctx.skip_grads.pop_back();
  return grad_in;
}

Tensor SkipAdd::forward(const Tensor& in, ForwardCtx& ctx) const {
  if (ctx.skips.empty()) throw InvalidArgument("SkipAdd without SkipSave");
  Tensor out = in;
  const Tensor& skip = ctx.skips.back();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += skip.v[i];
  ctx.skips.pop_back();
  return out;
}

Tensor SkipAdd::backward(const Tensor& grad_out, BackwardCtx& ctx,
                         std::span<FloatVec> /*pgrads*/) const {
  ctx.skip_grads.push_back(grad_out);
  return grad_out;
}

// ---------------------------------------------------------------------------
// Network

Network& Network::operator=(const Network& o) {
  if (this == &o) return *this;
  layers_.clear();
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
  reindex();
  return *this;
}

void Network::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  reindex();
}

void Network::reindex() {
  param_slots_.clear();
  layer_param_base_.assign(layers_.size(), 0);
  layer_tape_base_.assign(layers_.size(), 0);
  size_t tape = 0;
  for (size_t li = 0; li < layers_.size(); ++li) {
    layer_param_base_[li] = param_slots_.size();
    for (size_t pi = 0; pi < layers_[li]->params().size(); ++pi) {
      param_slots_.push_back({li, pi});
    }
    layer_tape_base_[li] = tape;
    tape += layers_[li]->tape_entries();
  }
}

void Network::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

Tensor Network::forward(const Tensor& in, Tape* tape) const {
  ForwardCtx ctx;
  ctx.tape = tape;
  if (tape) tape->reserve(tape->size() + layers_.size());
  Tensor x = in;
  for (const auto& l : layers_) x = l->forward(x, ctx);
  return x;
}

std::vector<Tensor> Network::forward_taps(const Tensor& in,
                                          const std::vector<int>& taps,
                                          Tape* tape) const {
  std::vector<Tensor> outputs;
  if (taps.empty()) return outputs;
  ForwardCtx ctx;
  ctx.tape = tape;
  if (tape) tape->reserve(tape->size() + taps.back() + 1);
  Tensor x = in;
  size_t next_tap = 0;
  const int last = taps.back();
  for (int li = 0; li <= last; ++li) {
    x = layers_[li]->forward(x, ctx);
    if (next_tap < taps.size() && taps[next_tap] == li) {
      outputs.push_back(x);
      ++next_tap;
    }
  }
  return outputs;
}

std::span<FloatVec> Network::layer_grad_span(Gradients* grads,
                                                       size_t li) const {
  if (!grads) return {};
  const size_t base = layer_param_base_[li];
  const size_t count = layers_[li]->params().size();
  return std::span<FloatVec>(grads->g.data() + base, count);
}

Tensor Network::backward(const Tape& tape, const Tensor& grad_out,
                         Gradients* grads) const {
  BackwardCtx ctx;
  ctx.tape = &tape;
  Tensor g = grad_out;
  for (size_t li = layers_.size(); li-- > 0;) {
    ctx.base = layer_tape_base_[li];
    g = layers_[li]->backward(g, ctx, layer_grad_span(grads, li));
  }
  return g;
}

Tensor Network::backward_taps(const Tape& tape, const std::vector<int>& taps,
                              const std::vector<Tensor>& tap_grads,
                              Gradients* grads) const {
  if (taps.empty() || taps.size() != tap_grads.size()) {
    throw InvalidArgument("backward_taps: tap/gradient count mismatch");
  }
  BackwardCtx ctx;
  ctx.tape = &tape;
  size_t tap_idx = taps.size() - 1;
  Tensor g = tap_grads[tap_idx];
  bool have_pending = tap_idx > 0;
  for (size_t li = static_cast<size_t>(taps.back()) + 1; li-- > 0;) {
    if (have_pending && static_cast<int>(li) == taps[tap_idx - 1]) {
      // Crossing an earlier tap boundary: add its gradient contribution.
      const Tensor& tg = tap_grads[tap_idx - 1];
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += tg.v[i];
      --tap_idx;
      have_pending = tap_idx > 0;
    }
    ctx.base = layer_tape_base_[li];
    g = layers_[li]->backward(g, ctx, layer_grad_span(grads, li));
  }
  return g;
}

size_t Network::param_count() const { return param_slots_.size(); }

NamedParam& Network::param(size_t i) {
  const Slot& s = param_slots_[i];
  return layers_[s.layer]->params()[s.index];
}

const NamedParam& Network::param(size_t i) const {
  const Slot& s = param_slots_[i];
  return layers_[s.layer]->params()[s.index];
}

std::vector<std::string> Network::param_names() const {
  std::vector<std::string> names;
  names.reserve(param_slots_.size());
  for (const Slot& s : param_slots_) {
    names.push_back("layer" + std::to_string(s.layer) + "." +
                    layers_[s.layer]->params()[s.index].name);
  }
  return names;
}

Gradients Network::alloc_grads() const {
  Gradients g;
  g.g.reserve(param_slots_.size());
  for (size_t i = 0; i < param_slots_.size(); ++i) {
    g.g.emplace_back(param(i).v.size(), 0.0f);
  }
  return g;
}

void Network::sgd_step(const Gradients& g, double lr) {
  for (size_t i = 0; i < param_slots_.size(); ++i) {
    auto& p = param(i).v;
    const auto& gv = g.g[i];
    for (size_t j = 0; j < p.size(); ++j) {
      p[j] -= static_cast<float>(lr * gv[j]);
    }
  }
}

bool Network::params_finite() const {
  for (size_t i = 0; i < param_slots_.size(); ++i) {
    for (float x : param(i).v) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

void parallel_for(int n, const std::function<void(int)>& fn) {
  static const int kWorkers = [] {
    if (const char* env = std::getenv("BADSR_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(hc == 0 ? 1 : std::min(hc, 8u));
  }();

  if (n <= 1 || kWorkers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(kWorkers, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    const int lo = static_cast<int>(static_cast<long>(n) * t / workers);
    const int hi = static_cast<int>(static_cast<long>(n) * (t + 1) / workers);
    pool.emplace_back([lo, hi, &fn, &errors, t] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace badsr::nn
