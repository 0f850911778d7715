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

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "badsr/config.hpp"

namespace badsr::cfg {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::string& path,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw InvalidArgument("config: " + path + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw InvalidArgument("config: unknown key '" + path + key + "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("config: bad value for '" + path + key + "'");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  corpus.validate();
  if (test_count < 1) throw InvalidArgument("config: test_count must be >= 1");
  if (output_dir.empty()) throw InvalidArgument("config: output_dir is empty");

  models::SrArch{substitute.blocks, substitute.channels, 4}.validate();
  models::SrArch{victim.blocks, victim.channels, 4}.validate();
  if (substitute.blocks < 3) {
    throw InvalidArgument("config: substitute.blocks must be >= 3 (extractor taps)");
  }
  if (substitute.epochs < 1 || substitute.batch_size < 1 || substitute.lr <= 0.0) {
    throw InvalidArgument("config: bad substitute training settings");
  }

  trigger.validate();
  if (trigger_batch < 1) throw InvalidArgument("config: trigger_batch must be >= 1");
  hr_poison.validate();

  if (selection.mode != "ga" && selection.mode != "random") {
    throw InvalidArgument("config: selection.mode must be 'ga' or 'random'");
  }
  select::GaConfig ga;
  ga.population = selection.population;
  ga.generations = selection.generations;
  ga.mutation_prob = selection.mutation_prob;
  ga.lambda = selection.lambda.value_or(0.0);
  ga.convergence_window = selection.convergence_window;
  ga.validate();

  if (poison_rate < 0.0 || poison_rate > 1.0) {
    throw InvalidArgument("config: poison_rate must be in [0, 1]");
  }
  train.validate();

  if (eval_cfg.asr_method != "surrogate" && eval_cfg.asr_method != "detector" &&
      eval_cfg.asr_method != "auto") {
    throw InvalidArgument(
        "config: eval.asr_method must be surrogate, detector, or auto");
  }
  if (eval_cfg.grid_count < 0 || eval_cfg.detector_epochs < 1) {
    throw InvalidArgument("config: bad eval settings");
  }

  if (!defense.kind.empty()) defense.validate();

  for (double r : ablation.rates) {
    if (r <= 0.0 || r > 1.0) {
      throw InvalidArgument("config: ablation.rates must be in (0, 1]");
    }
  }
  if (ablation.seeds.empty()) {
    throw InvalidArgument("config: ablation.seeds must be non-empty");
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown_keys(j, "", {"master_seed", "output_dir", "corpus", "test_count",
                              "target_png", "substitute", "victim", "trigger",
                              "trigger_batch", "hr_poison", "selection",
                              "poison_rate", "train", "eval", "defense",
                              "ablation"});
  read_field(j, "", "master_seed", c.master_seed);
  read_field(j, "", "output_dir", c.output_dir);
  read_field(j, "", "test_count", c.test_count);
  read_field(j, "", "target_png", c.target_png);
  read_field(j, "", "poison_rate", c.poison_rate);
  read_field(j, "", "trigger_batch", c.trigger_batch);

  if (j.contains("corpus")) {
    const json& s = j.at("corpus");
    reject_unknown_keys(s, "corpus.", {"source", "count", "hr_size", "png_dir"});
    std::string source = "synthetic";
    read_field(s, "corpus.", "source", source);
    if (source == "synthetic") {
      c.corpus.source = pipeline::CorpusSpec::Source::kSynthetic;
    } else if (source == "png-directory") {
      c.corpus.source = pipeline::CorpusSpec::Source::kPngDirectory;
    } else {
      throw InvalidArgument("config: corpus.source must be synthetic or png-directory");
    }
    read_field(s, "corpus.", "count", c.corpus.count);
    read_field(s, "corpus.", "hr_size", c.corpus.hr_size);
    read_field(s, "corpus.", "png_dir", c.corpus.png_dir);
  }

  if (j.contains("substitute")) {
    const json& s = j.at("substitute");
    reject_unknown_keys(s, "substitute.",
                        {"blocks", "channels", "epochs", "batch_size", "lr"});
    read_field(s, "substitute.", "blocks", c.substitute.blocks);
    read_field(s, "substitute.", "channels", c.substitute.channels);
    read_field(s, "substitute.", "epochs", c.substitute.epochs);
    read_field(s, "substitute.", "batch_size", c.substitute.batch_size);
    read_field(s, "substitute.", "lr", c.substitute.lr);
  }

  if (j.contains("victim")) {
    const json& s = j.at("victim");
    reject_unknown_keys(s, "victim.", {"blocks", "channels"});
    read_field(s, "victim.", "blocks", c.victim.blocks);
    read_field(s, "victim.", "channels", c.victim.channels);
  }

  if (j.contains("trigger")) {
    const json& s = j.at("trigger");
    reject_unknown_keys(s, "trigger.",
                        {"tau_rms", "lambda_adv", "lambda_lpips", "lambda_reg",
                         "iters", "lr", "init_sigma", "linf_budget"});
    read_field(s, "trigger.", "tau_rms", c.trigger.tau_rms);
    read_field(s, "trigger.", "lambda_adv", c.trigger.lambda_adv);
    read_field(s, "trigger.", "lambda_lpips", c.trigger.lambda_lpips);
    read_field(s, "trigger.", "lambda_reg", c.trigger.lambda_reg);
    read_field(s, "trigger.", "iters", c.trigger.iters);
    read_field(s, "trigger.", "lr", c.trigger.lr);
    read_field(s, "trigger.", "init_sigma", c.trigger.init_sigma);
    read_field(s, "trigger.", "linf_budget", c.trigger.linf_budget);
  }

  if (j.contains("hr_poison")) {
    const json& s = j.at("hr_poison");
    reject_unknown_keys(s, "hr_poison.", {"rms_budget", "iters", "lr", "kappa"});
    read_field(s, "hr_poison.", "rms_budget", c.hr_poison.rms_budget);
    read_field(s, "hr_poison.", "iters", c.hr_poison.iters);
    read_field(s, "hr_poison.", "lr", c.hr_poison.lr);
    if (s.contains("kappa") && !s.at("kappa").is_null()) {
      double kappa = 0.0;
      read_field(s, "hr_poison.", "kappa", kappa);
      c.hr_poison.kappa = kappa;
    }
  }

  if (j.contains("selection")) {
    const json& s = j.at("selection");
    reject_unknown_keys(s, "selection.",
                        {"mode", "population", "generations", "mutation_prob",
                         "lambda", "convergence_window"});
    read_field(s, "selection.", "mode", c.selection.mode);
    read_field(s, "selection.", "population", c.selection.population);
    read_field(s, "selection.", "generations", c.selection.generations);
    read_field(s, "selection.", "mutation_prob", c.selection.mutation_prob);
    read_field(s, "selection.", "convergence_window", c.selection.convergence_window);
    if (s.contains("lambda") && !s.at("lambda").is_null()) {
      double lambda = 0.0;
      read_field(s, "selection.", "lambda", lambda);
      c.selection.lambda = lambda;
    }
  }

  if (j.contains("train")) {
    const json& s = j.at("train");
    reject_unknown_keys(s, "train.",
                        {"epochs", "batch_size", "lr", "lambda_clean",
                         "lambda_poison"});
    read_field(s, "train.", "epochs", c.train.epochs);
    read_field(s, "train.", "batch_size", c.train.batch_size);
    read_field(s, "train.", "lr", c.train.lr);
    read_field(s, "train.", "lambda_clean", c.train.lambda_clean);
    read_field(s, "train.", "lambda_poison", c.train.lambda_poison);
  }

  if (j.contains("eval")) {
    const json& s = j.at("eval");
    reject_unknown_keys(s, "eval.", {"asr_method", "grid_count", "detector_epochs"});
    read_field(s, "eval.", "asr_method", c.eval_cfg.asr_method);
    read_field(s, "eval.", "grid_count", c.eval_cfg.grid_count);
    read_field(s, "eval.", "detector_epochs", c.eval_cfg.detector_epochs);
  }

  if (j.contains("defense")) {
    const json& s = j.at("defense");
    reject_unknown_keys(s, "defense.", {"kind", "parameters"});
    read_field(s, "defense.", "kind", c.defense.kind);
    read_field(s, "defense.", "parameters", c.defense.parameters);
  }

  if (j.contains("ablation")) {
    const json& s = j.at("ablation");
    reject_unknown_keys(s, "ablation.", {"rates", "seeds"});
    read_field(s, "ablation.", "rates", c.ablation.rates);
    read_field(s, "ablation.", "seeds", c.ablation.seeds);
  }

  c.corpus.seed = derive_seed(c.master_seed, "corpus");
  c.train.seed = derive_seed(c.master_seed, "train");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("config: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw InvalidArgument("config: " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["test_count"] = c.test_count;
  j["target_png"] = c.target_png;
  j["poison_rate"] = c.poison_rate;
  j["trigger_batch"] = c.trigger_batch;
  j["corpus"] = {
      {"source", c.corpus.source == pipeline::CorpusSpec::Source::kSynthetic
                     ? "synthetic"
                     : "png-directory"},
      {"count", c.corpus.count},
      {"hr_size", c.corpus.hr_size},
      {"png_dir", c.corpus.png_dir}};
  j["substitute"] = {{"blocks", c.substitute.blocks},
                     {"channels", c.substitute.channels},
                     {"epochs", c.substitute.epochs},
                     {"batch_size", c.substitute.batch_size},
                     {"lr", c.substitute.lr}};
  j["victim"] = {{"blocks", c.victim.blocks}, {"channels", c.victim.channels}};
  j["trigger"] = {{"tau_rms", c.trigger.tau_rms},
                  {"lambda_adv", c.trigger.lambda_adv},
                  {"lambda_lpips", c.trigger.lambda_lpips},
                  {"lambda_reg", c.trigger.lambda_reg},
                  {"iters", c.trigger.iters},
                  {"lr", c.trigger.lr},
                  {"init_sigma", c.trigger.init_sigma},
                  {"linf_budget", c.trigger.linf_budget}};
  j["hr_poison"] = {{"rms_budget", c.hr_poison.rms_budget},
                    {"iters", c.hr_poison.iters},
                    {"lr", c.hr_poison.lr}};
  if (c.hr_poison.kappa) j["hr_poison"]["kappa"] = *c.hr_poison.kappa;
  j["selection"] = {{"mode", c.selection.mode},
                    {"population", c.selection.population},
                    {"generations", c.selection.generations},
                    {"mutation_prob", c.selection.mutation_prob},
                    {"convergence_window", c.selection.convergence_window}};
  if (c.selection.lambda) j["selection"]["lambda"] = *c.selection.lambda;
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"lambda_clean", c.train.lambda_clean},
                {"lambda_poison", c.train.lambda_poison}};
  j["eval"] = {{"asr_method", c.eval_cfg.asr_method},
               {"grid_count", c.eval_cfg.grid_count},
               {"detector_epochs", c.eval_cfg.detector_epochs}};
  if (!c.defense.kind.empty()) {
    j["defense"] = {{"kind", c.defense.kind}, {"parameters", c.defense.parameters}};
  }
  j["ablation"] = {{"rates", c.ablation.rates}, {"seeds", c.ablation.seeds}};
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(c).dump())));
  return buf;
}

}  // namespace badsr::cfg
