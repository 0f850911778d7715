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
#include <cmath>
#include <numeric>

#include "badsr/eval.hpp"
#include "badsr/imaging.hpp"

namespace badsr::eval {

namespace {

MetricStat stat_of(const std::vector<double>& xs) {
  MetricStat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
  if (rank == 0) rank = 1;
  if (rank > n) rank = n;
  return values[rank - 1];
}

AsrResult attack_success_rate(const models::SrModel& model,
                              const std::vector<Image>& triggered_lrs,
                              const std::vector<Image>& clean_lrs,
                              const Image& y_star,
                              const models::Detector* detector,
                              const models::FeatureExtractor& fe) {
  if (triggered_lrs.empty()) {
    throw InvalidArgument("attack_success_rate: empty input list");
  }

  AsrResult res;
  const int n = static_cast<int>(triggered_lrs.size());
  res.flags.assign(n, 0);

  std::vector<Image> outputs(n);
  nn::parallel_for(n, [&](int i) {
    outputs[i] = models::sr_forward(model, triggered_lrs[i]);
  });

  if (detector) {
    res.method = "detector";
    res.threshold = 0.5;
    nn::parallel_for(n, [&](int i) {
      res.flags[i] = detector->predict(outputs[i]) >= res.threshold ? 1 : 0;
    });
  } else {
    if (clean_lrs.empty()) {
      throw InvalidArgument(
          "attack_success_rate: surrogate needs clean inputs for calibration");
    }
    res.method = "feature-similarity";
    const auto f_star = models::extract_features(fe, y_star);

    std::vector<double> clean_sims(clean_lrs.size());
    nn::parallel_for(static_cast<int>(clean_lrs.size()), [&](int i) {
      Image out = models::sr_forward(model, clean_lrs[i]);
      clean_sims[i] = models::feature_cosine(models::extract_features(fe, out),
                                             f_star);
    });
    res.threshold = percentile(clean_sims, 0.99);

    res.sims.assign(n, 0.0);
    nn::parallel_for(n, [&](int i) {
      res.sims[i] = models::feature_cosine(models::extract_features(fe, outputs[i]),
                                           f_star);
      res.flags[i] = res.sims[i] > res.threshold ? 1 : 0;
    });
  }

  int hits = 0;
  for (uint8_t f : res.flags) hits += f;
  res.asr = static_cast<double>(hits) / static_cast<double>(n);
  return res;
}

FunctionalityReport functionality_report(const models::SrModel& model,
                                         const pipeline::SRDataset& test_set) {
  FunctionalityReport rep;
  const int n = static_cast<int>(test_set.samples.size());
  rep.count = n;
  std::vector<double> psnrs(n), ssims(n), bpsnrs(n), bssims(n);
  nn::parallel_for(n, [&](int i) {
    const auto& s = test_set.samples[i];
    Image out = models::sr_forward(model, s.lr);
    psnrs[i] = imaging::psnr(out, s.hr);
    ssims[i] = imaging::ssim(out, s.hr);
    Image bi = imaging::bicubic_resize(s.lr, 4.0);
    bpsnrs[i] = imaging::psnr(bi, s.hr);
    bssims[i] = imaging::ssim(bi, s.hr);
  });
  rep.psnr = stat_of(psnrs);
  rep.ssim = stat_of(ssims);
  rep.bicubic_psnr = stat_of(bpsnrs);
  rep.bicubic_ssim = stat_of(bssims);
  return rep;
}

StealthReport stealth_report(const pipeline::SRDataset& clean,
                             const pipeline::SRDataset& poisoned) {
  if (clean.samples.size() != poisoned.samples.size()) {
    throw InvalidArgument("stealth_report: datasets are not index-aligned");
  }
  if (poisoned.poison_indices.empty()) {
    throw InvalidArgument("stealth_report: no poisoned samples");
  }
  const int n = static_cast<int>(poisoned.poison_indices.size());
  std::vector<double> lr_ssims(n), hr_psnrs(n), hr_ssims(n);
  nn::parallel_for(n, [&](int k) {
    const int i = poisoned.poison_indices[k];
    lr_ssims[k] = imaging::ssim(clean.samples[i].lr, poisoned.samples[i].lr);
    hr_psnrs[k] = imaging::psnr(clean.samples[i].hr, poisoned.samples[i].hr);
    hr_ssims[k] = imaging::ssim(clean.samples[i].hr, poisoned.samples[i].hr);
  });
  StealthReport rep;
  rep.poisoned_count = n;
  rep.lr_ssim_mean = stat_of(lr_ssims).mean;
  rep.hr_psnr_mean = stat_of(hr_psnrs).mean;
  rep.hr_ssim_mean = stat_of(hr_ssims).mean;
  return rep;
}

void DefenseSpec::validate() const {
  if (kind != "bit-depth" && kind != "jpeg") {
    throw InvalidArgument("DefenseSpec: kind must be 'bit-depth' or 'jpeg'");
  }
  if (parameters.empty()) {
    throw InvalidArgument("DefenseSpec: parameters must be non-empty");
  }
  for (int p : parameters) {
    if (kind == "bit-depth" && (p < 1 || p > 8)) {
      throw InvalidArgument("DefenseSpec: bits must be in [1, 8]");
    }
    if (kind == "jpeg" && (p < 1 || p > 100)) {
      throw InvalidArgument("DefenseSpec: quality must be in [1, 100]");
    }
  }
}

pipeline::SRDataset apply_defense(const pipeline::SRDataset& ds,
                                  const std::string& kind, int parameter) {
  pipeline::SRDataset out = ds;
  nn::parallel_for(static_cast<int>(out.samples.size()), [&](int i) {
    if (kind == "bit-depth") {
      out.samples[i].lr = imaging::bit_depth_reduce(out.samples[i].lr, parameter);
    } else if (kind == "jpeg") {
      out.samples[i].lr = imaging::jpeg_compress(out.samples[i].lr, parameter);
    } else {
      throw InvalidArgument("apply_defense: unknown kind " + kind);
    }
  });
  return out;
}

std::vector<DefenseRow> defense_sweep(const pipeline::SRDataset& poisoned,
                                      const DefenseSpec& spec,
                                      std::uint64_t base_seed,
                                      const TrainEvalFn& train_eval) {
  spec.validate();
  std::vector<DefenseRow> rows;
  for (int param : spec.parameters) {
    DefenseRow row;
    row.kind = spec.kind;
    row.parameter = param;
    const std::uint64_t row_seed =
        derive_seed(base_seed, "defense-" + spec.kind + "-" + std::to_string(param));
    try {
      pipeline::SRDataset defended = apply_defense(poisoned, spec.kind, param);
      auto [asr, psnr] = train_eval(defended, row_seed);
      row.asr = asr;
      row.clean_psnr = psnr;
    } catch (const Error& e) {
      row.failed = true;
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablation_effective_poisoning(
    const std::vector<double>& rates, const std::vector<std::uint64_t>& seeds,
    const AttackRunFn& run) {
  for (double r : rates) {
    if (r <= 0.0 || r > 1.0) {
      throw InvalidArgument("ablation: rates must be in (0, 1]");
    }
  }
  std::vector<AblationRow> rows;
  for (double rate : rates) {
    for (std::uint64_t seed : seeds) {
      for (bool with_ga : {true, false}) {
        auto [asr, ssim] = run(rate, with_ga, seed);
        rows.push_back({rate, with_ga, seed, asr, ssim});
      }
    }
  }
  return rows;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("spearman: need two aligned samples of size >= 2");
  }
  auto ranks = [](const std::vector<double>& xs) {
    const size_t n = xs.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t i, size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va < 1e-12 || vb < 1e-12) return 0.0;  // a constant ranking correlates with nothing
  return cov / std::sqrt(va * vb);
}

Image hstack(const std::vector<Image>& tiles, int separator_px) {
  if (tiles.empty()) throw InvalidArgument("hstack: no tiles");
  const int h = tiles[0].height, c = tiles[0].channels;
  int total_w = 0;
  for (const Image& t : tiles) {
    if (t.height != h || t.channels != c) {
      throw InvalidArgument("hstack: tiles must share height and channels");
    }
    total_w += t.width;
  }
  total_w += separator_px * (static_cast<int>(tiles.size()) - 1);
  Image out(h, total_w, c, 1.0f);
  int x0 = 0;
  for (const Image& t : tiles) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < t.width; ++x) {
        for (int ch = 0; ch < c; ++ch) out.at(y, x0 + x, ch) = t.at(y, x, ch);
      }
    }
    x0 += t.width + separator_px;
  }
  return out;
}

}  // namespace badsr::eval
