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

#include <optional>
#include <string>
#include <vector>

#include "badsr/image.hpp"
#include "badsr/nn.hpp"

namespace badsr::models {

/// Compact x4 super-resolution CNN: 3x3 stem, residual blocks, two x2
/// sub-pixel stages, 3x3 head.
struct SrArch {
  int blocks = 4;
  int channels = 32;
  int scale = 4;

  void validate() const {
    if (blocks < 1 || channels < 1) {
      throw InvalidArgument("SrArch: blocks and channels must be positive");
    }
    if (scale != 4) {
      throw InvalidArgument("SrArch: only scale 4 is supported");
    }
  }
};

class SrModel {
 public:
  SrModel() = default;
  SrModel(const SrArch& arch, std::uint64_t init_seed);

  const SrArch& arch() const { return arch_; }
  nn::Network& net() { return net_; }
  const nn::Network& net() const { return net_; }

  /// Unclamped forward on a planar tensor; training and gradient paths.
  nn::Tensor forward_raw(const nn::Tensor& lr, nn::Tape* tape = nullptr) const;

 private:
  SrArch arch_;
  nn::Network net_;
};

/// Inference-path forward: LR image in, x4 HR image out, clamped to [0, 1].
Image sr_forward(const SrModel& model, const Image& lr);

/// A differentiable scalar functional of the model output.
class OutputLoss {
 public:
  virtual ~OutputLoss() = default;
  virtual double value(const nn::Tensor& out) const = 0;
  /// d(value)/d(out). Throws UnsupportedLoss for non-differentiable specs.
  virtual nn::Tensor grad(const nn::Tensor& out) const = 0;
};

class SumLoss : public OutputLoss {
 public:
  double value(const nn::Tensor& out) const override;
  nn::Tensor grad(const nn::Tensor& out) const override;
};

/// ||out - target||_2, optionally squared.
class L2DistanceLoss : public OutputLoss {
 public:
  L2DistanceLoss(nn::Tensor target, bool squared)
      : target_(std::move(target)), squared_(squared) {}
  double value(const nn::Tensor& out) const override;
  nn::Tensor grad(const nn::Tensor& out) const override;

 private:
  nn::Tensor target_;
  bool squared_;
};

/// Per-element mean squared error against a target; the training loss family.
class MseLoss : public OutputLoss {
 public:
  explicit MseLoss(nn::Tensor target) : target_(std::move(target)) {}
  double value(const nn::Tensor& out) const override;
  nn::Tensor grad(const nn::Tensor& out) const override;

 private:
  nn::Tensor target_;
};

/// Fraction of elements above a threshold. Evaluable but has no gradient;
/// exercises the unsupported-loss error path.
class ThresholdCountLoss : public OutputLoss {
 public:
  explicit ThresholdCountLoss(double threshold) : threshold_(threshold) {}
  double value(const nn::Tensor& out) const override;
  nn::Tensor grad(const nn::Tensor& out) const override;

 private:
  double threshold_;
};

/// Exact reverse-mode gradient of loss(f(x)) with respect to the input
/// raster. Returned tensor matches the CHW shape of x.
nn::Tensor input_gradient(const SrModel& model, const Image& x,
                          const OutputLoss& loss);

/// L2 norm over all parameter gradients of the per-pixel MSE backdoor loss
/// at sample (x_p, y_t). Throws NumericalError if the forward pass produces
/// non-finite values.
double param_gradient_norm(const SrModel& model, const Image& x_p,
                           const Image& y_t);

/// Frozen tapped prefix of a pretrained SR model: stem plus the first three
/// residual blocks, one tap per block, weights 1/3 each.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  static FeatureExtractor from_sr_model(const SrModel& model);

  std::vector<nn::Tensor> extract(const nn::Tensor& img,
                                  nn::Tape* tape = nullptr) const;
  nn::Tensor backward(const nn::Tape& tape,
                      const std::vector<nn::Tensor>& tap_grads) const;

  const std::vector<int>& taps() const { return taps_; }
  const std::vector<double>& tap_weights() const { return weights_; }
  const nn::Network& net() const { return net_; }
  nn::Network& net() { return net_; }
  bool empty() const { return taps_.empty(); }

 private:
  nn::Network net_;
  std::vector<int> taps_;
  std::vector<double> weights_;
};

std::vector<nn::Tensor> extract_features(const FeatureExtractor& fe,
                                         const Image& img);

/// Sum over taps of the squared L2 distance between feature maps.
double feature_distance(const std::vector<nn::Tensor>& a,
                        const std::vector<nn::Tensor>& b);

/// Cosine similarity between two sets of feature maps, computed over the
/// concatenation of all taps.
double feature_cosine(const std::vector<nn::Tensor>& a,
                      const std::vector<nn::Tensor>& b);

/// Binary classifier scoring whether an HR image carries target-image
/// features. Four 3x3 conv stages with 2x2 pooling, global average pooling,
/// and a linear head; input dims must be divisible by 8.
class Detector {
 public:
  Detector() = default;
  explicit Detector(std::uint64_t init_seed);

  /// Probability in [0, 1].
  double predict(const Image& hr) const;
  double logit(const nn::Tensor& hr, nn::Tape* tape = nullptr) const;

  nn::Network& net() { return net_; }
  const nn::Network& net() const { return net_; }

 private:
  nn::Network net_;
};

struct DetectorTrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr = 0.2;
  double val_fraction = 0.25;
  double accuracy_gate = 0.85;
};

struct DetectorResult {
  Detector detector;
  double val_accuracy = 0.0;
};

/// Trains the detector on clean HRs (negatives) vs target-feature HRs
/// (positives) with a held-out split. Throws DetectorRejected when the
/// validation accuracy misses the gate; ASR evaluation then falls back to
/// the feature-similarity surrogate.
DetectorResult train_detector(const std::vector<Image>& clean_hrs,
                              const std::vector<Image>& target_feature_hrs,
                              std::uint64_t seed,
                              const DetectorTrainConfig& cfg = {});

/// On-the-fly detector positives: clean HRs blended with the target at
/// mixing weights in [0.3, 1.0].
std::vector<Image> make_detector_positives(const std::vector<Image>& clean_hrs,
                                           const Image& target, int count,
                                           Rng& rng);

// Checkpoints: a directory holding arch.json plus one little-endian float32
// blob per parameter, named by parameter path.
void save_sr_model(const SrModel& model, const std::string& dir);
SrModel load_sr_model(const std::string& dir);

}  // namespace badsr::models
