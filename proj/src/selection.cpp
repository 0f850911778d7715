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

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "badsr/selection.hpp"

namespace badsr::select {

using nlohmann::json;

namespace {

constexpr double kProbEps = 1e-9;

using Mask = std::vector<uint8_t>;

double mask_fitness(const Mask& m, const std::vector<double>& scores,
                    double lambda) {
  double acc = 0.0;
  int size = 0;
  for (size_t i = 0; i < m.size(); ++i) {
    if (m[i]) {
      acc += scores[i];
      ++size;
    }
  }
  return acc - lambda * size;
}

std::vector<int> mask_to_indices(const Mask& m) {
  std::vector<int> idx;
  for (size_t i = 0; i < m.size(); ++i) {
    if (m[i]) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

}  // namespace

void score_pool(CandidatePool& pool, const models::SrModel& model) {
  pool.scores.assign(pool.samples.size(), 0.0);
  pool.valid.assign(pool.samples.size(), 1);
  nn::parallel_for(static_cast<int>(pool.samples.size()), [&](int i) {
    try {
      pool.scores[i] = models::param_gradient_norm(model, pool.samples[i].x_p,
                                                   pool.samples[i].y_t);
    } catch (const NumericalError&) {
      pool.scores[i] = 0.0;
      pool.valid[i] = 0;
    }
  });
}

double fitness(const std::vector<int>& subset, const std::vector<double>& scores,
               double lambda) {
  std::set<int> seen;
  double acc = 0.0;
  for (int i : subset) {
    if (i < 0 || i >= static_cast<int>(scores.size())) {
      throw InvalidArgument("fitness: index " + std::to_string(i) +
                            " outside pool of size " +
                            std::to_string(scores.size()));
    }
    if (!seen.insert(i).second) {
      throw InvalidArgument("fitness: duplicate index " + std::to_string(i));
    }
    acc += scores[i];
  }
  return acc - lambda * static_cast<double>(subset.size());
}

SelectionResult ga_select_scores(const std::vector<double>& scores,
                                 const std::vector<uint8_t>& valid,
                                 const GaConfig& cfg) {
  cfg.validate();
  const size_t n = scores.size();
  if (n == 0) throw InvalidArgument("ga_select: empty pool");
  if (valid.size() != n) throw InvalidArgument("ga_select: valid mask size mismatch");
  bool any_valid = false;
  for (uint8_t v : valid) any_valid |= (v != 0);
  if (!any_valid) throw NumericalError("ga_select: no valid scores in pool");

  Rng rng(cfg.seed);
  const int pop_size = cfg.population;

  std::vector<Mask> population(pop_size, Mask(n, 0));
  for (Mask& m : population) {
    for (size_t i = 0; i < n; ++i) {
      if (valid[i] && rng.uniform() < 0.5) m[i] = 1;
    }
  }

  SelectionResult result;
  result.config = cfg;
  result.scores = scores;

  Mask best_mask(n, 0);
  double best_fit = mask_fitness(best_mask, scores, cfg.lambda);
  std::vector<double> fits(pop_size);

  for (int gen = 0; gen < cfg.generations; ++gen) {
    int gen_best = 0;
    for (int i = 0; i < pop_size; ++i) {
      fits[i] = mask_fitness(population[i], scores, cfg.lambda);
      if (fits[i] > fits[gen_best]) gen_best = i;
    }
    if (fits[gen_best] > best_fit) {
      best_fit = fits[gen_best];
      best_mask = population[gen_best];
    }
    result.best_fitness_per_generation.push_back(best_fit);

    const auto& trace = result.best_fitness_per_generation;
    if (static_cast<int>(trace.size()) > cfg.convergence_window) {
      bool flat = true;
      for (size_t i = trace.size() - cfg.convergence_window; i < trace.size(); ++i) {
        flat &= (trace[i] == trace[trace.size() - 1 - cfg.convergence_window]);
      }
      if (flat) break;
    }

    // Roulette wheel on min-shifted fitness; stays valid for negative raw
    // fitness values.
    double min_fit = *std::min_element(fits.begin(), fits.end());
    std::vector<double> cumulative(pop_size);
    double total = 0.0;
    for (int i = 0; i < pop_size; ++i) {
      total += fits[i] - min_fit + kProbEps;
      cumulative[i] = total;
    }
    auto pick = [&]() -> const Mask& {
      double r = rng.uniform() * total;
      size_t k = std::lower_bound(cumulative.begin(), cumulative.end(), r) -
                 cumulative.begin();
      if (k >= cumulative.size()) k = cumulative.size() - 1;
      return population[k];
    };

    std::vector<Mask> next;
    next.reserve(pop_size);
    next.push_back(best_mask);  // elite
    while (static_cast<int>(next.size()) < pop_size) {
      const Mask& p1 = pick();
      const Mask& p2 = pick();
      const double alpha = rng.uniform();  // one mixing draw per pair
      Mask child(n, 0);
      for (size_t i = 0; i < n; ++i) {
        child[i] = (rng.uniform() < alpha) ? p1[i] : p2[i];
      }
      for (size_t i = 0; i < n; ++i) {
        if (valid[i] && rng.uniform() < cfg.mutation_prob) child[i] ^= 1;
        if (!valid[i]) child[i] = 0;
      }
      next.push_back(std::move(child));
    }
    population = std::move(next);
  }

  result.chosen = mask_to_indices(best_mask);
  result.final_fitness = best_fit;
  return result;
}

SelectionResult ga_select(const CandidatePool& pool, const GaConfig& cfg) {
  if (!pool.scored()) throw InvalidArgument("ga_select: pool is not scored");
  return ga_select_scores(pool.scores, pool.valid, cfg);
}

std::vector<int> brute_force_select(const std::vector<double>& scores,
                                    double lambda, int max_pool_size) {
  const int n = static_cast<int>(scores.size());
  if (n > max_pool_size) {
    throw InvalidArgument("brute_force_select: pool of " + std::to_string(n) +
                          " exceeds limit " + std::to_string(max_pool_size));
  }
  if (n == 0) return {};
  std::vector<int> best;
  double best_fit = 0.0;  // fitness of the empty set
  for (std::uint64_t mask = 1; mask < (1ull << n); ++mask) {
    double fit = 0.0;
    int size = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1ull << i)) {
        fit += scores[i];
        ++size;
      }
    }
    fit -= lambda * size;
    if (fit > best_fit) {
      best_fit = fit;
      best.clear();
      for (int i = 0; i < n; ++i) {
        if (mask & (1ull << i)) best.push_back(i);
      }
    } else if (fit == best_fit) {
      std::vector<int> cand;
      for (int i = 0; i < n; ++i) {
        if (mask & (1ull << i)) cand.push_back(i);
      }
      if (std::lexicographical_compare(cand.begin(), cand.end(), best.begin(),
                                       best.end())) {
        best = std::move(cand);
      }
    }
  }
  return best;
}

json selection_to_json(const SelectionResult& r) {
  json j;
  j["chosen"] = r.chosen;
  j["final_fitness"] = r.final_fitness;
  j["best_fitness_per_generation"] = r.best_fitness_per_generation;
  j["scores"] = r.scores;
  j["config"] = {{"population", r.config.population},
                 {"generations", r.config.generations},
                 {"mutation_prob", r.config.mutation_prob},
                 {"lambda", r.config.lambda},
                 {"convergence_window", r.config.convergence_window},
                 {"seed", r.config.seed}};
  if (r.config.target_size) j["config"]["target_size"] = *r.config.target_size;
  return j;
}

SelectionResult selection_from_json(const json& j) {
  SelectionResult r;
  r.chosen = j.at("chosen").get<std::vector<int>>();
  r.final_fitness = j.at("final_fitness").get<double>();
  r.best_fitness_per_generation =
      j.at("best_fitness_per_generation").get<std::vector<double>>();
  r.scores = j.at("scores").get<std::vector<double>>();
  const json& c = j.at("config");
  r.config.population = c.at("population").get<int>();
  r.config.generations = c.at("generations").get<int>();
  r.config.mutation_prob = c.at("mutation_prob").get<double>();
  r.config.lambda = c.at("lambda").get<double>();
  r.config.convergence_window = c.at("convergence_window").get<int>();
  r.config.seed = c.at("seed").get<std::uint64_t>();
  if (c.contains("target_size")) r.config.target_size = c.at("target_size").get<int>();
  return r;
}

}  // namespace badsr::select
