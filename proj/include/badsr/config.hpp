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

#include "badsr/eval.hpp"
#include "badsr/pipeline.hpp"
#include "badsr/poisoncraft.hpp"
#include "badsr/selection.hpp"

namespace badsr::cfg {

struct ModelCfg {
  int blocks = 4;
  int channels = 32;
};

struct SubstituteCfg {
  int blocks = 4;
  int channels = 32;
  int epochs = 150;
  int batch_size = 10;
  double lr = 0.4;
};

struct SelectionCfg {
  std::string mode = "ga";  // "ga" | "random"
  int population = 32;
  int generations = 100;
  double mutation_prob = 0.05;
  std::optional<double> lambda;  // absent -> derived from scores and rate
  int convergence_window = 10;
};

struct EvalCfg {
  std::string asr_method = "surrogate";  // "surrogate" | "detector" | "auto"
  int grid_count = 4;
  int detector_epochs = 40;
};

struct AblationCfg {
  std::vector<double> rates{0.05, 0.10, 0.20};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

/// Everything one experiment needs. The master seed derives every stage
/// seed as derive_seed(master_seed, stage-name); see README for the scheme.
struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";

  pipeline::CorpusSpec corpus;  // corpus.seed is derived, not configured
  int test_count = 20;
  std::string target_png;  // empty -> built-in emblem

  SubstituteCfg substitute;
  ModelCfg victim;

  poison::TriggerConfig trigger;
  int trigger_batch = 10;

  poison::HrPoisonConfig hr_poison;
  SelectionCfg selection;
  double poison_rate = 0.10;

  pipeline::TrainConfig train;
  EvalCfg eval_cfg;

  eval::DefenseSpec defense;  // kind empty -> defend command requires flags
  AblationCfg ablation;

  void validate() const;
};

/// Parses and validates; unknown keys or out-of-range values throw
/// InvalidArgument with the offending field path. No compute happens before
/// validation passes.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// FNV-1a of the canonical (sorted-key) JSON dump; ties reports to configs.
std::string config_hash(const ExperimentConfig& c);

}  // namespace badsr::cfg
