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

#include <doctest.h>

#include <nlohmann/json.hpp>

#include "badsr/imaging.hpp"
#include "badsr/pipeline.hpp"
#include "test_util.hpp"

using namespace badsr;
using pipeline::CorpusSpec;

namespace {

pipeline::SRDataset tiny_clean(int count, int hr, std::uint64_t seed) {
  CorpusSpec spec;
  spec.count = count;
  spec.hr_size = hr;
  spec.seed = seed;
  return pipeline::make_clean_dataset(spec);
}

poison::TriggerArtifact tiny_trigger(int lr_size, std::uint64_t seed) {
  poison::TriggerArtifact t;
  t.delta = nn::Tensor(3, lr_size, lr_size);
  Rng rng(seed);
  for (float& v : t.delta.v) v = static_cast<float>(rng.uniform(-0.08, 0.08));
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("corpus: determinism, shapes, texture floor") {
  CorpusSpec spec;
  spec.count = 12;
  spec.hr_size = 64;
  spec.seed = 31;

  auto a = pipeline::synthesize_corpus(spec);
  auto b = pipeline::synthesize_corpus(spec);
  REQUIRE(a.size() == 12);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);

  spec.seed = 32;
  auto c = pipeline::synthesize_corpus(spec);
  CHECK(a[0].data != c[0].data);

  for (const Image& img : a) {
    CHECK(img.height == 64);
    CHECK(img.channels == 3);
    const size_t plane = static_cast<size_t>(img.height) * img.width;
    for (int ch = 0; ch < 3; ++ch) {
      double mean = 0.0;
      for (size_t p = 0; p < plane; ++p) mean += img.data[p * 3 + ch];
      mean /= static_cast<double>(plane);
      double var = 0.0;
      for (size_t p = 0; p < plane; ++p) {
        double d = img.data[p * 3 + ch] - mean;
        var += d * d;
      }
      CHECK(std::sqrt(var / static_cast<double>(plane)) >= 0.05);
    }
    for (float v : img.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("make_clean_dataset pairs LRs at scale 4") {
  auto ds = tiny_clean(5, 64, 77);
  REQUIRE(ds.samples.size() == 5);
  for (const auto& s : ds.samples) {
    CHECK(s.hr.height == 64);
    CHECK(s.lr.height == 16);
    CHECK_FALSE(s.poisoned);
    Image expect = imaging::bicubic_resize(s.hr, 0.25);
    CHECK(s.lr.data == expect.data);
  }
}

TEST_CASE("target emblem is fixed, high contrast, and size-flexible") {
  Image a = pipeline::target_emblem(64);
  Image b = pipeline::target_emblem(64);
  CHECK(a.data == b.data);
  CHECK(a.height == 64);
  double mn = 1.0, mx = 0.0;
  for (float v : a.data) {
    mn = std::min(mn, static_cast<double>(v));
    mx = std::max(mx, static_cast<double>(v));
  }
  CHECK(mx - mn > 0.7);
  CHECK(pipeline::target_emblem(128).height == 128);
}

TEST_CASE("build_poisoned_dataset: rate handling and bookkeeping") {
  auto clean = tiny_clean(20, 32, 123);
  auto trigger = tiny_trigger(8, 5);
  auto fe = models::FeatureExtractor::from_sr_model(models::SrModel({3, 8, 4}, 9));
  Image target = pipeline::target_emblem(32);
  poison::HrPoisonConfig hr_cfg;
  hr_cfg.iters = 3;

  pipeline::PoisonSelection random_sel;
  random_sel.mode = pipeline::SelectionMode::kRandom;
  random_sel.random_seed = 99;

  SUBCASE("rate 0 is an identity copy") {
    auto ds = pipeline::build_poisoned_dataset(clean, 0.0, target, trigger,
                                               random_sel, hr_cfg, fe);
    CHECK(ds.poison_indices.empty());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      CHECK(ds.samples[i].lr.data == clean.samples[i].lr.data);
      CHECK(ds.samples[i].hr.data == clean.samples[i].hr.data);
    }
  }

  SUBCASE("rate 0.10 poisons exactly 2 of 20; clean entries are untouched") {
    auto ds = pipeline::build_poisoned_dataset(clean, 0.10, target, trigger,
                                               random_sel, hr_cfg, fe);
    REQUIRE(ds.poison_indices.size() == 2);
    std::vector<uint8_t> is_poison(20, 0);
    for (int i : ds.poison_indices) is_poison[i] = 1;
    for (int i = 0; i < 20; ++i) {
      if (is_poison[i]) {
        CHECK(ds.samples[i].poisoned);
        CHECK(ds.samples[i].hr.data != clean.samples[i].hr.data);
        CHECK(ds.samples[i].lr.data != clean.samples[i].lr.data);
        double l2 = l2_distance(ds.samples[i].hr, clean.samples[i].hr);
        CHECK(l2 <= hr_cfg.epsilon_for(clean.samples[i].hr) + 1e-6);
      } else {
        CHECK_FALSE(ds.samples[i].poisoned);
        CHECK(ds.samples[i].hr.data == clean.samples[i].hr.data);
        CHECK(ds.samples[i].lr.data == clean.samples[i].lr.data);
      }
    }
    // flags, manifest set, and changed-HR set all agree
    CHECK(ds.poison_records.size() == 2);
    for (const auto& r : ds.poison_records) {
      CHECK(is_poison[r.index]);
    }
    // the clean input dataset is untouched
    for (const auto& s : clean.samples) CHECK_FALSE(s.poisoned);
  }

  SUBCASE("random selection is seed-deterministic") {
    auto d1 = pipeline::build_poisoned_dataset(clean, 0.2, target, trigger,
                                               random_sel, hr_cfg, fe);
    auto d2 = pipeline::build_poisoned_dataset(clean, 0.2, target, trigger,
                                               random_sel, hr_cfg, fe);
    CHECK(d1.poison_indices == d2.poison_indices);
    pipeline::PoisonSelection other = random_sel;
    other.random_seed = 100;
    auto d3 = pipeline::build_poisoned_dataset(clean, 0.2, target, trigger,
                                               other, hr_cfg, fe);
    CHECK(d1.poison_indices != d3.poison_indices);
  }

  SUBCASE("oversized GA selections are truncated to top scores") {
    select::SelectionResult ga;
    ga.chosen = {0, 1, 2, 3, 4};
    ga.scores.assign(20, 0.0);
    ga.scores[0] = 0.1;
    ga.scores[1] = 5.0;
    ga.scores[2] = 3.0;
    ga.scores[3] = 4.0;
    ga.scores[4] = 0.2;
    pipeline::PoisonSelection sel;
    sel.mode = pipeline::SelectionMode::kGa;
    sel.ga = ga;
    auto ds = pipeline::build_poisoned_dataset(clean, 0.10, target, trigger,
                                               sel, hr_cfg, fe);
    CHECK(ds.poison_indices == std::vector<int>{1, 3});
  }

  SUBCASE("undersized GA selections are topped up by score") {
    select::SelectionResult ga;
    ga.chosen = {7};
    ga.scores.assign(20, 0.0);
    ga.scores[12] = 9.0;
    pipeline::PoisonSelection sel;
    sel.mode = pipeline::SelectionMode::kGa;
    sel.ga = ga;
    auto ds = pipeline::build_poisoned_dataset(clean, 0.10, target, trigger,
                                               sel, hr_cfg, fe);
    CHECK(ds.poison_indices == std::vector<int>{7, 12});
  }

  SUBCASE("empty dataset and bad rate are rejected") {
    pipeline::SRDataset empty;
    CHECK_THROWS_AS(pipeline::build_poisoned_dataset(empty, 0.1, target, trigger,
                                                     random_sel, hr_cfg, fe),
                    InvalidArgument);
    CHECK_THROWS_AS(pipeline::build_poisoned_dataset(clean, 1.5, target, trigger,
                                                     random_sel, hr_cfg, fe),
                    InvalidArgument);
  }
}

TEST_CASE("train_backdoor: sanity, decomposition identity, determinism") {
  auto clean = tiny_clean(8, 32, 321);
  pipeline::TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 4;
  cfg.lr = 0.3;
  cfg.seed = 5;

  auto out = pipeline::train_backdoor(clean, {2, 12, 4}, cfg);
  REQUIRE(out.curve.size() == 12);
  CHECK(out.curve.back().total < out.curve.front().total);
  for (const auto& e : out.curve) {
    CHECK_FALSE(e.poison.has_value());  // rate 0: degenerate branch
    CHECK(e.total == doctest::Approx(cfg.lambda_clean * e.clean).epsilon(1e-12));
  }

  SUBCASE("decomposition holds with poisoned samples present") {
    auto ds = clean;
    ds.poison_indices = {0, 3};
    ds.samples[0].poisoned = ds.samples[3].poisoned = true;
    pipeline::TrainConfig c2 = cfg;
    c2.lambda_poison = 2.0;
    c2.epochs = 4;
    auto r = pipeline::train_backdoor(ds, {2, 12, 4}, c2);
    for (const auto& e : r.curve) {
      REQUIRE(e.poison.has_value());
      CHECK(e.total == doctest::Approx(c2.lambda_clean * e.clean +
                                       c2.lambda_poison * *e.poison)
                           .epsilon(1e-9));
    }
  }

  SUBCASE("same seed reproduces parameters bitwise") {
    auto again = pipeline::train_backdoor(clean, {2, 12, 4}, cfg);
    REQUIRE(again.model.net().param_count() == out.model.net().param_count());
    for (size_t i = 0; i < out.model.net().param_count(); ++i) {
      CHECK(again.model.net().param(i).v == out.model.net().param(i).v);
    }
    pipeline::TrainConfig c3 = cfg;
    c3.seed = 6;
    auto other = pipeline::train_backdoor(clean, {2, 12, 4}, c3);
    bool differs = false;
    for (size_t i = 0; i < out.model.net().param_count() && !differs; ++i) {
      differs = other.model.net().param(i).v != out.model.net().param(i).v;
    }
    CHECK(differs);
  }
}

TEST_CASE("infer: deterministic and clamped") {
  auto clean = tiny_clean(4, 32, 55);
  pipeline::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 0.2;
  auto out = pipeline::train_backdoor(clean, {2, 12, 4}, cfg);
  Image y1 = pipeline::infer(out.model, clean.samples[0].lr);
  Image y2 = pipeline::infer(out.model, clean.samples[0].lr);
  CHECK(y1.data == y2.data);
  for (float v : y1.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("dataset disk roundtrip preserves structure") {
  testutil::TempDir tmp("dataset");
  auto clean = tiny_clean(6, 32, 88);
  auto trigger = tiny_trigger(8, 6);
  auto fe = models::FeatureExtractor::from_sr_model(models::SrModel({3, 8, 4}, 8));
  poison::HrPoisonConfig hr_cfg;
  hr_cfg.iters = 2;
  pipeline::PoisonSelection sel;
  sel.random_seed = 3;
  auto ds = pipeline::build_poisoned_dataset(clean, 0.34, pipeline::target_emblem(32),
                                             trigger, sel, hr_cfg, fe);
  REQUIRE(ds.poison_indices.size() == 2);

  nlohmann::json extra = {{"note", "roundtrip"}};
  pipeline::save_dataset(ds, tmp.str(), extra);
  auto back = pipeline::load_dataset(tmp.str());

  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.poison_indices == ds.poison_indices);
  CHECK(back.rate == doctest::Approx(ds.rate));
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].poisoned == ds.samples[i].poisoned);
    // PNG quantizes to 8 bit; agreement within half a step
    for (size_t j = 0; j < ds.samples[i].hr.data.size(); ++j) {
      CHECK(std::abs(back.samples[i].hr.data[j] - ds.samples[i].hr.data[j]) <=
            0.5f / 255.0f + 1e-6f);
    }
  }
  CHECK_THROWS_AS(pipeline::load_dataset(tmp.str() + "/no"), MissingArtifact);
}

TEST_SUITE_END();
