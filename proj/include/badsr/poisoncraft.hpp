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
#include "badsr/models.hpp"
#include "badsr/nn.hpp"

namespace badsr::poison {

/// Poisoned-HR generation settings. The L2 budget is expressed per element
/// (RMS): the effective ball radius is rms_budget * sqrt(H*W*C), which keeps
/// the budget resolution independent.
struct HrPoisonConfig {
  double rms_budget = 0.05;
  std::optional<double> kappa;  // optional early-stop feature distance
  int iters = 50;
  double lr = 0.1;

  void validate() const {
    if (rms_budget < 0.0 || iters < 1 || lr <= 0.0) {
      throw InvalidArgument("HrPoisonConfig: rms_budget >= 0, iters >= 1, lr > 0");
    }
  }

  double epsilon_for(const Image& img) const {
    return rms_budget * std::sqrt(static_cast<double>(img.size()));
  }
};

struct HrPoisonResult {
  Image y_p;
  double feature_distance = 0.0;  // at the returned iterate
  double initial_distance = 0.0;
  double l2_used = 0.0;  // ||y_p - y||_2
  int iters_run = 0;
};

/// Projected gradient descent from y: minimizes the squared feature distance
/// to the target while keeping ||y_p - y||_2 <= eps exactly (ball projection
/// after every step) and y_p in [0, 1]. Returns the best iterate seen.
HrPoisonResult generate_poisoned_hr(const Image& y, const Image& y_target,
                                    const models::FeatureExtractor& fe,
                                    const HrPoisonConfig& cfg);

/// Hinge penalty on the perturbation norm: 0 below tau, linear above.
double dynamic_penalty(double delta_norm, double tau);

/// Perceptual distance over extractor taps: per-position unit-normalized
/// channel vectors, squared differences averaged over positions, tap-weighted
/// sum. Positions with feature norm < 1e-12 contribute zero.
double lpips_distance(const models::FeatureExtractor& fe, const Image& a,
                      const Image& b);

struct TriggerConfig {
  double tau_rms = 0.05;  // penalty threshold as RMS; tau = tau_rms * sqrt(n)
  double lambda_adv = 1.0;
  double lambda_lpips = 1.0;
  double lambda_reg = 1.0;
  int iters = 300;
  double lr = 0.01;
  double init_sigma = 0.05;
  double linf_budget = 1.0;

  void validate() const {
    if (lambda_adv < 0.0 || lambda_lpips < 0.0 || lambda_reg < 0.0) {
      throw InvalidArgument("TriggerConfig: loss weights must be >= 0");
    }
    if (iters < 1 || lr <= 0.0 || init_sigma < 0.0 || linf_budget <= 0.0 ||
        tau_rms < 0.0) {
      throw InvalidArgument("TriggerConfig: bad optimization settings");
    }
  }
};

struct TriggerTraceRow {
  double adv = 0.0;
  double lpips = 0.0;
  double reg = 0.0;
};

/// A universal perturbation shared by every poisoned LR image.
struct TriggerArtifact {
  nn::Tensor delta;  // CHW, |delta| <= config.linf_budget elementwise
  std::vector<TriggerTraceRow> trace;
  TriggerConfig config;
  std::uint64_t seed = 0;
  double best_objective = 0.0;
  int best_iteration = -1;
};

/// Gradient ascent on lambda_adv * L_adv - lambda_lpips * L_lpips -
/// lambda_reg * L_reg, batch-mean losses, Gaussian init, per-step clamp of
/// delta to the L-inf budget. Returns the best-objective iterate with the
/// full per-iteration trace. Throws NumericalError if the objective turns
/// non-finite.
TriggerArtifact optimize_trigger(const std::vector<Image>& lr_batch,
                                 const std::vector<Image>& hr_batch,
                                 const models::SrModel& model,
                                 const models::FeatureExtractor& fe,
                                 const TriggerConfig& cfg, std::uint64_t seed);

/// clamp(x + delta, 0, 1); shapes must match.
Image apply_trigger(const Image& x, const TriggerArtifact& t);

/// Raw float32 raster blob plus JSON sidecar (config, seed, trace).
void save_trigger(const TriggerArtifact& t, const std::string& dir);
TriggerArtifact load_trigger(const std::string& dir);

}  // namespace badsr::poison
