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

#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "badsr/common.hpp"
#include "badsr/image.hpp"

namespace badsr::nn {

/// Planar C x H x W float tensor, the internal feature-map currency.
struct Tensor {
  int c = 0, h = 0, w = 0;
  FloatVec v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  float& at(int ci, int y, int x) {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  float at(int ci, int y, int x) const {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

Tensor from_image(const Image& img);
Image to_image(const Tensor& t, bool clamp = true);

double l2_norm(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

/// One named parameter array.
struct NamedParam {
  std::string name;
  FloatVec v;
};

/// Saved forward activations. Owned by the caller so that a const network
/// can serve any number of concurrent forward/backward passes.
using Tape = std::vector<Tensor>;

/// Per-call execution state: optional tape plus the skip-connection stack.
struct ForwardCtx {
  Tape* tape = nullptr;  // null -> inference only, nothing saved
  std::vector<Tensor> skips;
};

struct BackwardCtx {
  const Tape* tape = nullptr;
  size_t base = 0;  // index of the current layer's first saved entry
  std::vector<Tensor> skip_grads;
};

/// Gradient buffers aligned with Network::param_count()/param(i).
struct Gradients {
  std::vector<FloatVec> g;
  void zero() {
    for (auto& b : g) std::fill(b.begin(), b.end(), 0.0f);
  }
  void add_scaled(const Gradients& other, float s) {
    for (size_t i = 0; i < g.size(); ++i) {
      for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += s * other.g[i][j];
    }
  }
  double l2_norm() const {
    double acc = 0.0;
    for (const auto& b : g) {
      for (float x : b) acc += static_cast<double>(x) * x;
    }
    return std::sqrt(acc);
  }
};

class Layer {
 public:
  virtual ~Layer() = default;

  /// Runs the layer; appends exactly tape_entries() tensors when ctx.tape is set.
  virtual Tensor forward(const Tensor& in, ForwardCtx& ctx) const = 0;

  /// Propagates grad_out to the layer input. pgrads, when non-empty, is
  /// aligned with this layer's params() order and is accumulated into.
  virtual Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                          std::span<FloatVec> pgrads) const = 0;

  virtual size_t tape_entries() const { return 0; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual void init(Rng& rng) {}

  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }

 protected:
  std::vector<NamedParam> params_;
};

/// 2D convolution, kernel size 1 or 3, stride 1. 3x3 kernels use replicate
/// edge padding. Weights are Kaiming-uniform initialized (times init_scale),
/// biases zero. Residual-branch outputs and heads use a 0.1 scale so deep
/// stacks start near the identity and plain SGD stays stable.
class Conv : public Layer {
 public:
  Conv(int in_ch, int out_ch, int ksize, double init_scale = 1.0);
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  size_t tape_entries() const override { return 1; }  // input
  std::unique_ptr<Layer> clone() const override;
  void init(Rng& rng) override;

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, ksize_;
  double init_scale_;
};

class Relu : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  size_t tape_entries() const override { return 1; }  // output (mask)
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(); }
};

/// Rearranges (4C, H, W) -> (C, 2H, 2W); input channel c*4 + dy*2 + dx feeds
/// output pixel (2y+dy, 2x+dx) of channel c.
class PixelShuffle2 : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<PixelShuffle2>();
  }
};

/// 2x2 average pooling, stride 2. Requires even dims.
class AvgPool2 : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<AvgPool2>();
  }
};

/// (C, H, W) -> (C, 1, 1) mean over the spatial plane.
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  size_t tape_entries() const override { return 1; }  // input dims
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<GlobalAvgPool>();
  }
};

/// Pushes a fixed bicubic x4 upsample of the input onto the skip stack, so
/// the network body learns the residual over the interpolation baseline.
/// Pairs with a SkipAdd after the head.
class BicubicSkip4 : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<BicubicSkip4>();
  }
};

/// Unclamped bicubic x4 upsampling on a planar tensor (Keys a = -0.5,
/// replicate edges), and its exact transpose.
Tensor bicubic_up4(const Tensor& in);
Tensor bicubic_up4_transpose(const Tensor& grad_out);

/// Pushes the running activation onto the skip stack (residual entry point).
class SkipSave : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<SkipSave>();
  }
};

/// Pops the skip stack and adds it (residual exit point). Pairs nest.
class SkipAdd : public Layer {
 public:
  Tensor forward(const Tensor& in, ForwardCtx& ctx) const override;
  Tensor backward(const Tensor& grad_out, BackwardCtx& ctx,
                  std::span<FloatVec> pgrads) const override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<SkipAdd>();
  }
};

/// A straight chain of layers with stack-based skip connections.
class Network {
 public:
  Network() = default;
  Network(const Network& o) { *this = o; }
  Network& operator=(const Network& o);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer);
  size_t layer_count() const { return layers_.size(); }
  const Layer& layer(size_t i) const { return *layers_[i]; }

  /// Draws every parameter from the rng in layer order.
  void init(Rng& rng);

  Tensor forward(const Tensor& in, Tape* tape = nullptr) const;

  /// Runs layers [0, upto_layer]; collects the activation after every layer
  /// index listed in taps (taps must be sorted ascending).
  std::vector<Tensor> forward_taps(const Tensor& in, const std::vector<int>& taps,
                                   Tape* tape = nullptr) const;

  /// Full reverse pass; returns d(loss)/d(input). grads may be null for
  /// input-gradient-only passes.
  Tensor backward(const Tape& tape, const Tensor& grad_out,
                  Gradients* grads = nullptr) const;

  /// Reverse pass from per-tap gradients, for tapped prefix forwards made
  /// with forward_taps.
  Tensor backward_taps(const Tape& tape, const std::vector<int>& taps,
                       const std::vector<Tensor>& tap_grads,
                       Gradients* grads = nullptr) const;

  // Flat parameter access (layer-major, insertion order).
  size_t param_count() const;
  NamedParam& param(size_t i);
  const NamedParam& param(size_t i) const;
  std::vector<std::string> param_names() const;

  Gradients alloc_grads() const;
  void sgd_step(const Gradients& g, double lr);

  bool params_finite() const;

 private:
  struct Slot {
    size_t layer;
    size_t index;
  };
  void reindex();
  size_t tape_base(size_t layer_idx) const;
  std::span<FloatVec> layer_grad_span(Gradients* grads,
                                                size_t layer_idx) const;

  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Slot> param_slots_;
  std::vector<size_t> layer_param_base_;
  std::vector<size_t> layer_tape_base_;
};

/// Runs fn(i) for i in [0, n) across a small thread pool. Each index writes
/// only its own outputs, so results are identical for any worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace badsr::nn
