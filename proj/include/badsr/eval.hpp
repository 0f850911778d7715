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

#include <functional>
#include <string>
#include <vector>

#include "badsr/models.hpp"
#include "badsr/pipeline.hpp"

namespace badsr::eval {

struct AsrResult {
  double asr = 0.0;
  std::vector<uint8_t> flags;  // per-sample success
  std::string method;          // "detector" or "feature-similarity"
  double threshold = 0.0;      // decision threshold actually used
  std::vector<double> sims;    // surrogate similarities (empty for detector)
};

/// Attack success rate. With a detector: success iff p(target features) >=
/// 0.5 on the model output. Without one: cosine similarity between extractor
/// features of the output and of the target must exceed the 99th percentile
/// of clean-output similarities (nearest-rank, calibrated per run on
/// clean_lrs through the same model).
AsrResult attack_success_rate(const models::SrModel& model,
                              const std::vector<Image>& triggered_lrs,
                              const std::vector<Image>& clean_lrs,
                              const Image& y_star,
                              const models::Detector* detector,
                              const models::FeatureExtractor& fe);

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct FunctionalityReport {
  MetricStat psnr, ssim;
  MetricStat bicubic_psnr, bicubic_ssim;  // context baseline
  int count = 0;
};

/// Per-image PSNR/SSIM of model outputs against ground-truth HRs on a test
/// set disjoint from training, with the bicubic x4 baseline alongside.
FunctionalityReport functionality_report(const models::SrModel& model,
                                         const pipeline::SRDataset& test_set);

struct StealthReport {
  double lr_ssim_mean = 0.0;
  double hr_psnr_mean = 0.0;
  double hr_ssim_mean = 0.0;
  int poisoned_count = 0;
};

/// Similarity between poisoned and clean pairs, over poisoned indices only.
/// Throws InvalidArgument when the poison set is empty.
StealthReport stealth_report(const pipeline::SRDataset& clean,
                             const pipeline::SRDataset& poisoned);

struct DefenseSpec {
  std::string kind;             // "bit-depth" | "jpeg"
  std::vector<int> parameters;  // bits or qualities

  void validate() const;
};

struct DefenseRow {
  std::string kind;
  int parameter = 0;
  double asr = 0.0;
  double clean_psnr = 0.0;
  bool failed = false;
  std::string note;
};

/// Applies the defense to every LR image (clean and poisoned alike).
pipeline::SRDataset apply_defense(const pipeline::SRDataset& ds,
                                  const std::string& kind, int parameter);

/// Retrain-and-evaluate closure: defended dataset + row seed -> (asr, psnr).
using TrainEvalFn =
    std::function<std::pair<double, double>(const pipeline::SRDataset&, std::uint64_t)>;

/// One row per parameter value: preprocess all LR inputs, retrain the victim
/// with a row-derived seed, measure ASR and clean PSNR. Training failures
/// annotate the row instead of aborting the sweep.
std::vector<DefenseRow> defense_sweep(const pipeline::SRDataset& poisoned,
                                      const DefenseSpec& spec,
                                      std::uint64_t base_seed,
                                      const TrainEvalFn& train_eval);

struct AblationRow {
  double rate = 0.0;
  bool effective = false;  // GA selection vs uniform random
  std::uint64_t seed = 0;
  double asr = 0.0;
  double ssim = 0.0;  // clean-input functionality SSIM
};

/// Paired runs per (rate, seed): GA-selected vs uniformly random poison
/// subsets, identical seeds otherwise.
using AttackRunFn =
    std::function<std::pair<double, double>(double rate, bool with_ga, std::uint64_t seed)>;

std::vector<AblationRow> ablation_effective_poisoning(
    const std::vector<double>& rates, const std::vector<std::uint64_t>& seeds,
    const AttackRunFn& run);

/// Spearman rank correlation; ties get average ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Nearest-rank percentile (q in [0, 1]) of a sample.
double percentile(std::vector<double> values, double q);

/// Writes a horizontal strip of equally sized images with a thin separator,
/// for side-by-side inspection grids.
Image hstack(const std::vector<Image>& tiles, int separator_px = 2);

}  // namespace badsr::eval
