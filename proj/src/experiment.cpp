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

#include "badsr/experiment.hpp"
#include "badsr/imaging.hpp"

namespace badsr::exp {

pipeline::SRDataset build_train_corpus(const cfg::ExperimentConfig& c) {
  pipeline::CorpusSpec spec = c.corpus;
  spec.seed = derive_seed(c.master_seed, "corpus");
  return pipeline::make_clean_dataset(spec);
}

pipeline::SRDataset build_test_corpus(const cfg::ExperimentConfig& c) {
  // The test corpus continues the same deterministic stream after the
  // training images, so the two are disjoint by construction.
  pipeline::CorpusSpec spec = c.corpus;
  spec.seed = derive_seed(c.master_seed, "corpus");
  spec.count = c.corpus.count + c.test_count;
  pipeline::SRDataset full = pipeline::make_clean_dataset(spec);
  pipeline::SRDataset test;
  test.scale = full.scale;
  test.corpus_seed = full.corpus_seed;
  test.samples.assign(full.samples.begin() + c.corpus.count, full.samples.end());
  return test;
}

Image load_target(const cfg::ExperimentConfig& c) {
  if (!c.target_png.empty()) {
    Image t = imaging::read_png(c.target_png);
    if (t.height != c.corpus.hr_size || t.width != c.corpus.hr_size ||
        t.channels != 3) {
      throw InvalidArgument("target_png must be a " +
                            std::to_string(c.corpus.hr_size) + "x" +
                            std::to_string(c.corpus.hr_size) + " RGB image");
    }
    return t;
  }
  return pipeline::target_emblem(c.corpus.hr_size);
}

models::SrModel pretrain_substitute(const cfg::ExperimentConfig& c,
                                    const pipeline::SRDataset& clean) {
  pipeline::TrainConfig tc;
  tc.epochs = c.substitute.epochs;
  tc.batch_size = c.substitute.batch_size;
  tc.lr = c.substitute.lr;
  tc.seed = derive_seed(c.master_seed, "substitute");
  models::SrArch arch{c.substitute.blocks, c.substitute.channels, 4};
  return pipeline::train_backdoor(clean, arch, tc).model;
}

poison::TriggerArtifact make_trigger(const cfg::ExperimentConfig& c,
                                     const pipeline::SRDataset& clean,
                                     const models::SrModel& substitute,
                                     const models::FeatureExtractor& fe) {
  const int batch = std::min<int>(c.trigger_batch,
                                  static_cast<int>(clean.samples.size()));
  std::vector<Image> lrs, hrs;
  lrs.reserve(batch);
  hrs.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    lrs.push_back(clean.samples[i].lr);
    hrs.push_back(clean.samples[i].hr);
  }
  return poison::optimize_trigger(lrs, hrs, substitute, fe, c.trigger,
                                  derive_seed(c.master_seed, "trigger"));
}

select::CandidatePool build_scored_pool(const cfg::ExperimentConfig& c,
                                        const pipeline::SRDataset& clean,
                                        const Image& target,
                                        const poison::TriggerArtifact& trigger,
                                        const models::SrModel& substitute) {
  select::CandidatePool pool;
  pool.samples.resize(clean.samples.size());
  nn::parallel_for(static_cast<int>(clean.samples.size()), [&](int i) {
    pool.samples[i] = {i, poison::apply_trigger(clean.samples[i].lr, trigger),
                       target};
  });
  select::score_pool(pool, substitute);
  return pool;
}

Attacker prepare_attacker(const cfg::ExperimentConfig& c) {
  Attacker atk;
  atk.config = c;
  atk.train_clean = build_train_corpus(c);
  atk.test_clean = build_test_corpus(c);
  atk.target = load_target(c);
  atk.substitute = pretrain_substitute(c, atk.train_clean);
  atk.fe = models::FeatureExtractor::from_sr_model(atk.substitute);
  atk.trigger = make_trigger(c, atk.train_clean, atk.substitute, atk.fe);
  atk.pool = build_scored_pool(c, atk.train_clean, atk.target, atk.trigger,
                               atk.substitute);
  return atk;
}

double auto_lambda(const std::vector<double>& scores,
                   const std::vector<uint8_t>& valid, double rate) {
  std::vector<double> vs;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (valid.empty() || valid[i]) vs.push_back(scores[i]);
  }
  if (vs.empty()) throw NumericalError("auto_lambda: no valid scores");
  const int k = static_cast<int>(std::llround(rate * scores.size()));
  std::sort(vs.begin(), vs.end(), std::greater<>());
  if (k <= 0) return vs.front() + 1.0;
  if (k >= static_cast<int>(vs.size())) return 0.0;
  return vs[k];  // the (k+1)-th largest: top-k entries clear the bar
}

select::SelectionResult select_with_ga(const Attacker& atk, double rate) {
  const auto& sc = atk.config.selection;
  select::GaConfig ga;
  ga.population = sc.population;
  ga.generations = sc.generations;
  ga.mutation_prob = sc.mutation_prob;
  ga.convergence_window = sc.convergence_window;
  ga.lambda = sc.lambda.value_or(
      auto_lambda(atk.pool.scores, atk.pool.valid, rate));
  ga.target_size = static_cast<int>(
      std::llround(rate * static_cast<double>(atk.pool.size())));
  ga.seed = derive_seed(atk.config.master_seed, "ga");
  return select::ga_select(atk.pool, ga);
}

pipeline::SRDataset build_poisoned(const Attacker& atk, double rate,
                                   double hr_rms_budget, bool with_ga,
                                   std::uint64_t selection_seed) {
  poison::HrPoisonConfig hr_cfg = atk.config.hr_poison;
  hr_cfg.rms_budget = hr_rms_budget;

  pipeline::PoisonSelection sel;
  if (with_ga) {
    sel.mode = pipeline::SelectionMode::kGa;
    sel.ga = select_with_ga(atk, rate);
  } else {
    sel.mode = pipeline::SelectionMode::kRandom;
    sel.random_seed = derive_seed(selection_seed, "selection-random");
  }
  return pipeline::build_poisoned_dataset(atk.train_clean, rate, atk.target,
                                          atk.trigger, sel, hr_cfg, atk.fe);
}

eval::AsrResult eval_asr(const Attacker& atk, const models::SrModel& victim) {
  std::vector<Image> triggered(atk.test_clean.samples.size());
  std::vector<Image> clean(atk.test_clean.samples.size());
  nn::parallel_for(static_cast<int>(atk.test_clean.samples.size()), [&](int i) {
    clean[i] = atk.test_clean.samples[i].lr;
    triggered[i] = poison::apply_trigger(clean[i], atk.trigger);
  });

  const std::string& method = atk.config.eval_cfg.asr_method;
  if (method == "detector" || method == "auto") {
    std::vector<Image> negatives;
    for (const auto& s : atk.train_clean.samples) negatives.push_back(s.hr);
    Rng rng(derive_seed(atk.config.master_seed, "detector-positives"));
    std::vector<Image> positives = models::make_detector_positives(
        negatives, atk.target, static_cast<int>(negatives.size()), rng);
    models::DetectorTrainConfig dtc;
    dtc.epochs = atk.config.eval_cfg.detector_epochs;
    try {
      auto det = models::train_detector(
          negatives, positives, derive_seed(atk.config.master_seed, "detector"),
          dtc);
      return eval::attack_success_rate(victim, triggered, clean, atk.target,
                                       &det.detector, atk.fe);
    } catch (const DetectorRejected&) {
      if (method == "detector") throw;
      // auto mode: fall through to the surrogate
    }
  }
  return eval::attack_success_rate(victim, triggered, clean, atk.target,
                                   nullptr, atk.fe);
}

AttackOutcome train_and_eval(const Attacker& atk,
                             const pipeline::SRDataset& poisoned,
                             std::uint64_t victim_seed) {
  pipeline::TrainConfig tc = atk.config.train;
  tc.seed = victim_seed;
  models::SrArch arch{atk.config.victim.blocks, atk.config.victim.channels, 4};
  auto trained = pipeline::train_backdoor(poisoned, arch, tc);

  AttackOutcome out{std::move(trained.model), std::move(trained.curve), {}, {}, {}};
  out.asr = eval_asr(atk, out.victim);
  out.fn = eval::functionality_report(out.victim, atk.test_clean);
  if (!poisoned.poison_indices.empty()) {
    out.stealth = eval::stealth_report(atk.train_clean, poisoned);
  }
  return out;
}

AttackOutcome run_attack(const Attacker& atk, double rate, double hr_rms_budget,
                         bool with_ga, std::uint64_t victim_seed) {
  pipeline::SRDataset poisoned =
      build_poisoned(atk, rate, hr_rms_budget, with_ga, victim_seed);
  return train_and_eval(atk, poisoned, victim_seed);
}

}  // namespace badsr::exp
