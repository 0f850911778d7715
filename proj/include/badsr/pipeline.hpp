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

#include <nlohmann/json_fwd.hpp>

#include "badsr/image.hpp"
#include "badsr/models.hpp"
#include "badsr/poisoncraft.hpp"
#include "badsr/selection.hpp"

namespace badsr::pipeline {

struct CorpusSpec {
  enum class Source { kSynthetic, kPngDirectory };
  Source source = Source::kSynthetic;
  int count = 100;
  int hr_size = 128;
  int scale = 4;
  std::uint64_t seed = 0;
  std::string png_dir;

  void validate() const {
    if (count < 1) throw InvalidArgument("CorpusSpec: count must be >= 1");
    if (hr_size < 8 || hr_size % scale != 0) {
      throw InvalidArgument("CorpusSpec: hr_size must be >= 8 and divisible by scale");
    }
    if (scale != 4) throw InvalidArgument("CorpusSpec: scale must be 4");
    if (source == Source::kPngDirectory && png_dir.empty()) {
      throw InvalidArgument("CorpusSpec: png-directory source needs a path");
    }
  }
};

/// Deterministic procedural HR images: gradient base, sinusoid gratings,
/// anti-aliased geometric shapes, and blurred texture noise. Per-channel
/// standard deviation is kept >= 0.05.
std::vector<Image> synthesize_corpus(const CorpusSpec& spec);

struct PoisonRecord {
  int index = 0;
  double feature_distance = 0.0;
  double l2_used = 0.0;
};

struct SRDataset {
  std::vector<PairedSample> samples;
  std::vector<int> poison_indices;          // S, sorted
  std::vector<PoisonRecord> poison_records; // aligned with poison_indices
  int scale = 4;
  double rate = 0.0;
  std::uint64_t corpus_seed = 0;

  size_t size() const { return samples.size(); }
};

/// HR corpus paired with bicubic 1/4 LR inputs.
SRDataset make_clean_dataset(const CorpusSpec& spec);

/// The built-in high-contrast target emblem, rendered at the given size.
Image target_emblem(int size);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 10;
  double lr = 0.4;
  double lambda_clean = 1.0;
  double lambda_poison = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || lr <= 0.0 || lambda_clean < 0.0 ||
        lambda_poison < 0.0) {
      throw InvalidArgument("TrainConfig: non-positive field");
    }
  }
};

enum class SelectionMode { kGa, kRandom };

struct PoisonSelection {
  SelectionMode mode = SelectionMode::kRandom;
  std::optional<select::SelectionResult> ga;  // required when mode == kGa
  std::uint64_t random_seed = 0;
};

/// Builds the poisoned dataset: exactly round(rate * N) samples get a
/// triggered LR and a feature-collided HR label; everything else is copied
/// bit for bit. GA selections larger than the quota are truncated to the
/// top-g_p entries, smaller ones topped up by score.
SRDataset build_poisoned_dataset(const SRDataset& clean, double rate,
                                 const Image& y_star,
                                 const poison::TriggerArtifact& trigger,
                                 const PoisonSelection& selection,
                                 const poison::HrPoisonConfig& hr_cfg,
                                 const models::FeatureExtractor& fe);

struct EpochLoss {
  double clean = 0.0;
  std::optional<double> poison;  // absent when the poison set is empty
  double total = 0.0;            // lambda_c * clean + lambda_p * poison
};

struct TrainOutcome {
  models::SrModel model;
  std::vector<EpochLoss> curve;
};

/// Plain SGD on lambda_c * L_c + lambda_p * L_p with per-pixel MSE terms,
/// seed-derived init and shuffling. Throws NumericalError on non-finite loss.
TrainOutcome train_backdoor(const SRDataset& ds, const models::SrArch& arch,
                            const TrainConfig& cfg);

/// Inference: sr_forward with the output clamped to [0, 1].
Image infer(const models::SrModel& model, const Image& lr);

/// Dataset directory: lr/NNNN.png, hr/NNNN.png, manifest.json.
void save_dataset(const SRDataset& ds, const std::string& dir,
                  const nlohmann::json& extra_manifest);
SRDataset load_dataset(const std::string& dir);

/// FNV-1a over the 8-bit quantized raster, as hex; identifies the target
/// image in manifests.
std::string image_content_hash(const Image& img);

}  // namespace badsr::pipeline
