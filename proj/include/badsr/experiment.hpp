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

#include "badsr/config.hpp"
#include "badsr/eval.hpp"

namespace badsr::exp {

/// Everything the attacker derives from the master seed before any victim
/// is trained: clean corpora, pretrained substitute, feature extractor,
/// optimized trigger, and the scored candidate pool.
struct Attacker {
  cfg::ExperimentConfig config;
  pipeline::SRDataset train_clean;
  pipeline::SRDataset test_clean;
  Image target;
  models::SrModel substitute;
  models::FeatureExtractor fe;
  poison::TriggerArtifact trigger;
  select::CandidatePool pool;  // scored against the substitute snapshot
};

/// Stage builders (the CLI persists between stages; the acceptance suite
/// chains them in memory).
pipeline::SRDataset build_train_corpus(const cfg::ExperimentConfig& c);
pipeline::SRDataset build_test_corpus(const cfg::ExperimentConfig& c);
Image load_target(const cfg::ExperimentConfig& c);
models::SrModel pretrain_substitute(const cfg::ExperimentConfig& c,
                                    const pipeline::SRDataset& clean);
poison::TriggerArtifact make_trigger(const cfg::ExperimentConfig& c,
                                     const pipeline::SRDataset& clean,
                                     const models::SrModel& substitute,
                                     const models::FeatureExtractor& fe);
select::CandidatePool build_scored_pool(const cfg::ExperimentConfig& c,
                                        const pipeline::SRDataset& clean,
                                        const Image& target,
                                        const poison::TriggerArtifact& trigger,
                                        const models::SrModel& substitute);

Attacker prepare_attacker(const cfg::ExperimentConfig& c);

/// Fitness penalty that puts the unconstrained optimum near round(rate * n):
/// the (k+1)-th largest valid score.
double auto_lambda(const std::vector<double>& scores,
                   const std::vector<uint8_t>& valid, double rate);

/// GA over the scored pool with the configured settings and the resolved
/// lambda. Seeded from the master seed ("ga" component).
select::SelectionResult select_with_ga(const Attacker& atk, double rate);

/// Builds the poisoned training set for one arm.
pipeline::SRDataset build_poisoned(const Attacker& atk, double rate,
                                   double hr_rms_budget, bool with_ga,
                                   std::uint64_t selection_seed);

struct AttackOutcome {
  models::SrModel victim;
  std::vector<pipeline::EpochLoss> curve;
  eval::AsrResult asr;
  eval::FunctionalityReport fn;
  std::optional<eval::StealthReport> stealth;
};

/// Trains a victim on the given dataset and evaluates ASR, functionality,
/// and stealth. victim_seed drives initialization and shuffling only.
AttackOutcome train_and_eval(const Attacker& atk,
                             const pipeline::SRDataset& poisoned,
                             std::uint64_t victim_seed);

/// Convenience wrapper: build_poisoned + train_and_eval. The random arm's
/// subset is seeded from the victim seed so paired runs share everything
/// else.
AttackOutcome run_attack(const Attacker& atk, double rate, double hr_rms_budget,
                         bool with_ga, std::uint64_t victim_seed);

/// ASR of a victim using the configured method (surrogate, detector, or
/// auto fallback), calibrated on the held-out clean corpus.
eval::AsrResult eval_asr(const Attacker& atk, const models::SrModel& victim);

}  // namespace badsr::exp
