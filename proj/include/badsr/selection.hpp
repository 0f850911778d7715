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

namespace badsr::select {

/// One poisoning candidate: triggered LR input plus the label it would carry.
struct Candidate {
  int index = 0;
  Image x_p;
  Image y_t;
};

/// Candidates with lazily computed backdoor-gradient scores. Scores are
/// immutable for a fixed model snapshot.
struct CandidatePool {
  std::vector<Candidate> samples;
  std::vector<double> scores;   // g_p per candidate, filled by score_pool
  std::vector<uint8_t> valid;   // 0 when the score could not be computed

  bool scored() const { return scores.size() == samples.size(); }
  size_t size() const { return samples.size(); }
};

/// Fills pool.scores with the parameter-gradient norm of the backdoor loss
/// at each candidate, against a fixed model snapshot. Numerically failing
/// samples are marked invalid and excluded from selection.
void score_pool(CandidatePool& pool, const models::SrModel& model);

/// Sum of member scores minus lambda * |subset|. Throws on out-of-range
/// or duplicate indices.
double fitness(const std::vector<int>& subset, const std::vector<double>& scores,
               double lambda);

struct GaConfig {
  int population = 32;
  int generations = 100;
  double mutation_prob = 0.05;
  double lambda = 0.0;
  std::optional<int> target_size;  // enforced by the pipeline's repair step
  int convergence_window = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (population < 2) throw InvalidArgument("GaConfig: population must be >= 2");
    if (generations < 1) throw InvalidArgument("GaConfig: generations must be >= 1");
    if (mutation_prob < 0.0 || mutation_prob > 1.0) {
      throw InvalidArgument("GaConfig: mutation_prob must be in [0, 1]");
    }
    if (lambda < 0.0) throw InvalidArgument("GaConfig: lambda must be >= 0");
    if (convergence_window < 1) {
      throw InvalidArgument("GaConfig: convergence_window must be >= 1");
    }
  }
};

struct SelectionResult {
  std::vector<int> chosen;  // sorted ascending
  std::vector<double> best_fitness_per_generation;  // non-decreasing
  double final_fitness = 0.0;
  std::vector<double> scores;  // g_p table, indexed like the pool
  GaConfig config;
};

/// Genetic search over binary membership masks: roulette selection on
/// min-shifted fitness, per-pair uniform crossover, Bernoulli bit-flip
/// mutation, one elite carried per generation. Stops after `generations`
/// or when the best fitness is flat for `convergence_window` generations.
SelectionResult ga_select(const CandidatePool& pool, const GaConfig& cfg);

/// Same search given bare scores (all valid unless flagged otherwise).
SelectionResult ga_select_scores(const std::vector<double>& scores,
                                 const std::vector<uint8_t>& valid,
                                 const GaConfig& cfg);

/// Exhaustive argmax of the fitness over all subsets; validation oracle.
/// Ties break to the lexicographically smallest index set. Refuses pools
/// larger than max_pool_size.
std::vector<int> brute_force_select(const std::vector<double>& scores,
                                    double lambda, int max_pool_size = 20);

nlohmann::json selection_to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);

}  // namespace badsr::select
