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
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "badsr/imaging.hpp"
#include "badsr/pipeline.hpp"

namespace badsr::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Corpus synthesis

namespace {

void add_gratings(Image& img, Rng& rng, int count) {
  const int s = img.height;
  for (int g = 0; g < count; ++g) {
    double theta = rng.uniform(0.0, M_PI);
    double cycles = rng.uniform(1.5, 4.5);
    double phase = rng.uniform(0.0, 2.0 * M_PI);
    double amp = rng.uniform(0.04, 0.12);
    double cw[3] = {rng.uniform(0.3, 1.0), rng.uniform(0.3, 1.0),
                    rng.uniform(0.3, 1.0)};
    double fx = std::cos(theta) * cycles * 2.0 * M_PI / s;
    double fy = std::sin(theta) * cycles * 2.0 * M_PI / s;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double v = amp * std::sin(fx * x + fy * y + phase);
        for (int c = 0; c < img.channels; ++c) {
          img.at(y, x, c) += static_cast<float>(v * cw[c % 3]);
        }
      }
    }
  }
}

void add_shapes(Image& img, Rng& rng, int count) {
  const double s = img.height;
  for (int k = 0; k < count; ++k) {
    const bool disk = rng.uniform() < 0.5;
    double cx = rng.uniform(0.1, 0.9) * s;
    double cy = rng.uniform(0.1, 0.9) * s;
    double rx = rng.uniform(0.08, 0.3) * s;
    double ry = disk ? rx : rng.uniform(0.08, 0.3) * s;
    double alpha = rng.uniform(0.55, 0.95);
    float color[3] = {static_cast<float>(rng.uniform()),
                      static_cast<float>(rng.uniform()),
                      static_cast<float>(rng.uniform())};
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        // signed distance to the shape boundary, > 0 outside
        double d;
        if (disk) {
          double dx = (x - cx) / rx, dy = (y - cy) / rx;
          d = (std::sqrt(dx * dx + dy * dy) - 1.0) * rx;
        } else {
          double dx = std::abs(x - cx) - rx;
          double dy = std::abs(y - cy) - ry;
          d = std::max(dx, dy);
        }
        // 1.2 px anti-aliased edge
        double cov = std::clamp(0.5 - d / 1.2, 0.0, 1.0);
        if (cov <= 0.0) continue;
        double a = alpha * cov;
        for (int c = 0; c < img.channels; ++c) {
          img.at(y, x, c) = static_cast<float>(
              (1.0 - a) * img.at(y, x, c) + a * color[c % 3]);
        }
      }
    }
  }
}

void add_texture(Image& img, Rng& rng, double amp) {
  const int h = img.height, w = img.width;
  std::vector<float> noise(static_cast<size_t>(h) * w);
  for (float& v : noise) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  // 3x3 box blur, replicate edges
  auto idx = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return static_cast<size_t>(y) * w + x;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) acc += noise[idx(y + dy, x + dx)];
      }
      float v = static_cast<float>(amp * acc / 9.0);
      for (int c = 0; c < img.channels; ++c) img.at(y, x, c) += v;
    }
  }
}

Image synthesize_one(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 3);

  // bilinear gradient base
  float corners[4][3];
  for (auto& corner : corners) {
    for (float& v : corner) v = static_cast<float>(rng.uniform(0.15, 0.85));
  }
  for (int y = 0; y < size; ++y) {
    float ty = static_cast<float>(y) / (size - 1);
    for (int x = 0; x < size; ++x) {
      float tx = static_cast<float>(x) / (size - 1);
      for (int c = 0; c < 3; ++c) {
        float top = (1 - tx) * corners[0][c] + tx * corners[1][c];
        float bot = (1 - tx) * corners[2][c] + tx * corners[3][c];
        img.at(y, x, c) = (1 - ty) * top + ty * bot;
      }
    }
  }

  add_gratings(img, rng, 2);
  add_shapes(img, rng, 4 + static_cast<int>(rng.uniform_int(5)));
  add_texture(img, rng, 0.03);
  img.clamp();

  // keep every channel comfortably non-flat
  const size_t plane = static_cast<size_t>(size) * size;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (size_t p = 0; p < plane; ++p) mean += img.data[p * 3 + c];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (size_t p = 0; p < plane; ++p) {
      double d = img.data[p * 3 + c] - mean;
      var += d * d;
    }
    double stddev = std::sqrt(var / static_cast<double>(plane));
    if (stddev < 0.05 && stddev > 1e-9) {
      double stretch = 0.055 / stddev;
      for (size_t p = 0; p < plane; ++p) {
        img.data[p * 3 + c] = clamp01(
            static_cast<float>(mean + stretch * (img.data[p * 3 + c] - mean)));
      }
    }
  }
  return img;
}

}  // namespace

std::vector<Image> synthesize_corpus(const CorpusSpec& spec) {
  spec.validate();
  if (spec.source == CorpusSpec::Source::kPngDirectory) {
    std::vector<std::string> files;
    if (!fs::is_directory(spec.png_dir)) {
      throw InvalidArgument("synthesize_corpus: not a directory: " + spec.png_dir);
    }
    for (const auto& e : fs::directory_iterator(spec.png_dir)) {
      if (e.path().extension() == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<Image> out;
    PatchSpec patch{spec.hr_size, spec.scale, spec.hr_size};
    for (const std::string& f : files) {
      if (static_cast<int>(out.size()) >= spec.count) break;
      Image hr = imaging::read_png(f);
      if (hr.channels != 3 || hr.height < spec.hr_size || hr.width < spec.hr_size) {
        continue;
      }
      Image lr = imaging::bicubic_resize(hr, 1.0 / spec.scale);
      // trim HR so the LR pairing divides exactly
      Image hr_even(lr.height * spec.scale, lr.width * spec.scale, 3);
      for (int y = 0; y < hr_even.height; ++y) {
        for (int x = 0; x < hr_even.width; ++x) {
          for (int c = 0; c < 3; ++c) hr_even.at(y, x, c) = hr.at(y, x, c);
        }
      }
      for (auto& p : imaging::crop_patches(lr, hr_even, patch)) {
        if (static_cast<int>(out.size()) >= spec.count) break;
        out.push_back(std::move(p.hr));
      }
    }
    if (static_cast<int>(out.size()) < spec.count) {
      throw InvalidArgument("synthesize_corpus: directory yielded only " +
                            std::to_string(out.size()) + " of " +
                            std::to_string(spec.count) + " patches");
    }
    return out;
  }

  std::vector<Image> out(spec.count);
  nn::parallel_for(spec.count, [&](int i) {
    out[i] = synthesize_one(
        spec.hr_size, derive_seed(spec.seed, "corpus-image-" + std::to_string(i)));
  });
  return out;
}

SRDataset make_clean_dataset(const CorpusSpec& spec) {
  std::vector<Image> hrs = synthesize_corpus(spec);
  SRDataset ds;
  ds.scale = spec.scale;
  ds.corpus_seed = spec.seed;
  ds.samples.resize(hrs.size());
  nn::parallel_for(static_cast<int>(hrs.size()), [&](int i) {
    PairedSample& p = ds.samples[i];
    p.lr = imaging::bicubic_resize(hrs[i], 1.0 / spec.scale);
    p.hr = std::move(hrs[i]);
    p.poisoned = false;
    p.source_id = "synth-" + std::to_string(i);
  });
  return ds;
}

Image target_emblem(int size) {
  if (size < 8) throw InvalidArgument("target_emblem: size must be >= 8");
  Image img(size, size, 3);
  const double c = (size - 1) / 2.0;
  const float gold[3] = {0.95f, 0.78f, 0.12f};
  const float navy[3] = {0.06f, 0.10f, 0.45f};
  const float red[3] = {0.85f, 0.10f, 0.10f};
  const float white[3] = {0.97f, 0.97f, 0.97f};
  const int tile = std::max(2, size / 16);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double dx = x - c, dy = y - c;
      double r = std::sqrt(dx * dx + dy * dy) / (size / 2.0);
      const float* col;
      if (r > 0.92) {
        // checkerboard frame
        col = (((x / tile) + (y / tile)) % 2 == 0) ? red : white;
      } else if (std::abs(dx - dy) < size * 0.04 ||
                 std::abs(dx + dy) < size * 0.04) {
        col = white;  // diagonal cross
      } else {
        // concentric rings
        col = (static_cast<int>(r * 6.0) % 2 == 0) ? gold : navy;
      }
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = col[ch];
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Poisoned dataset construction

SRDataset build_poisoned_dataset(const SRDataset& clean, double rate,
                                 const Image& y_star,
                                 const poison::TriggerArtifact& trigger,
                                 const PoisonSelection& selection,
                                 const poison::HrPoisonConfig& hr_cfg,
                                 const models::FeatureExtractor& fe) {
  if (clean.samples.empty()) {
    throw InvalidArgument("build_poisoned_dataset: empty dataset");
  }
  if (rate < 0.0 || rate > 1.0) {
    throw InvalidArgument("build_poisoned_dataset: rate must be in [0, 1]");
  }
  const int n = static_cast<int>(clean.samples.size());
  const int quota = static_cast<int>(std::llround(rate * n));

  SRDataset out = clean;
  out.rate = rate;
  out.poison_indices.clear();
  out.poison_records.clear();
  if (quota == 0) return out;

  std::vector<int> chosen;
  if (selection.mode == SelectionMode::kRandom) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(selection.random_seed);
    for (int i = 0; i < quota; ++i) {
      int j = i + static_cast<int>(rng.uniform_int(n - i));
      std::swap(all[i], all[j]);
    }
    chosen.assign(all.begin(), all.begin() + quota);
  } else {
    if (!selection.ga) {
      throw InvalidArgument("build_poisoned_dataset: GA mode without a result");
    }
    const auto& ga = *selection.ga;
    for (int i : ga.chosen) {
      if (i < 0 || i >= n) {
        throw InvalidArgument("build_poisoned_dataset: selection index " +
                              std::to_string(i) + " outside dataset");
      }
    }
    chosen = ga.chosen;
    auto by_score_desc = [&](int a, int b) {
      if (ga.scores[a] != ga.scores[b]) return ga.scores[a] > ga.scores[b];
      return a < b;
    };
    if (static_cast<int>(chosen.size()) > quota) {
      // hard repair: keep the top-g_p entries
      std::sort(chosen.begin(), chosen.end(), by_score_desc);
      chosen.resize(quota);
    } else if (static_cast<int>(chosen.size()) < quota) {
      std::vector<uint8_t> in_set(n, 0);
      for (int i : chosen) in_set[i] = 1;
      std::vector<int> rest;
      for (int i = 0; i < n; ++i) {
        if (!in_set[i]) rest.push_back(i);
      }
      std::sort(rest.begin(), rest.end(), by_score_desc);
      for (int i : rest) {
        if (static_cast<int>(chosen.size()) >= quota) break;
        chosen.push_back(i);
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());

  out.poison_indices = chosen;
  out.poison_records.resize(chosen.size());
  nn::parallel_for(static_cast<int>(chosen.size()), [&](int k) {
    const int idx = chosen[k];
    PairedSample& s = out.samples[idx];
    s.lr = poison::apply_trigger(clean.samples[idx].lr, trigger);
    auto hr_res = poison::generate_poisoned_hr(clean.samples[idx].hr, y_star,
                                               fe, hr_cfg);
    s.hr = std::move(hr_res.y_p);
    s.poisoned = true;
    out.poison_records[k] = {idx, hr_res.feature_distance, hr_res.l2_used};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training

TrainOutcome train_backdoor(const SRDataset& ds, const models::SrArch& arch,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (ds.samples.empty()) throw InvalidArgument("train_backdoor: empty dataset");

  TrainOutcome out{models::SrModel(arch, derive_seed(cfg.seed, "init")), {}};
  nn::Network& net = out.model.net();

  const int n = static_cast<int>(ds.samples.size());
  const int batch = std::min(cfg.batch_size, n);

  // Per-sample CHW caches.
  std::vector<nn::Tensor> xs(n), ys(n);
  nn::parallel_for(n, [&](int i) {
    xs[i] = nn::from_image(ds.samples[i].lr);
    ys[i] = nn::from_image(ds.samples[i].hr);
  });

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<nn::Gradients> sample_grads(batch);
  for (auto& g : sample_grads) g = net.alloc_grads();
  std::vector<double> sample_loss(n, 0.0);

  const bool has_poison = !ds.poison_indices.empty();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[shuffle_rng.uniform_int(static_cast<std::uint32_t>(i))]);
    }
    for (int start = 0; start < n; start += batch) {
      const int bn = std::min(batch, n - start);
      int n_clean = 0, n_pois = 0;
      for (int bi = 0; bi < bn; ++bi) {
        (ds.samples[order[start + bi]].poisoned ? n_pois : n_clean)++;
      }
      nn::parallel_for(bn, [&](int bi) {
        const int si = order[start + bi];
        const bool poisoned = ds.samples[si].poisoned;
        nn::Tape tape;
        nn::Tensor pred = net.forward(xs[si], &tape);
        const size_t numel = pred.v.size();
        double se = 0.0;
        nn::Tensor dout(pred.c, pred.h, pred.w);
        // batch term: lambda * mean-over-group of per-pixel MSE
        const double weight =
            poisoned ? cfg.lambda_poison / n_pois : cfg.lambda_clean / n_clean;
        const float gscale = static_cast<float>(2.0 * weight / numel);
        for (size_t j = 0; j < numel; ++j) {
          double d = static_cast<double>(pred.v[j]) - ys[si].v[j];
          se += d * d;
          dout.v[j] = gscale * static_cast<float>(d);
        }
        sample_loss[si] = se / static_cast<double>(numel);
        sample_grads[bi].zero();
        net.backward(tape, dout, &sample_grads[bi]);
      });

      nn::Gradients total = net.alloc_grads();
      for (int bi = 0; bi < bn; ++bi) total.add_scaled(sample_grads[bi], 1.0f);
      net.sgd_step(total, cfg.lr);
    }

    // epoch curve from the losses observed during the pass
    double sum_clean = 0.0, sum_pois = 0.0;
    int cnt_clean = 0, cnt_pois = 0;
    for (int i = 0; i < n; ++i) {
      if (ds.samples[i].poisoned) {
        sum_pois += sample_loss[i];
        ++cnt_pois;
      } else {
        sum_clean += sample_loss[i];
        ++cnt_clean;
      }
    }
    EpochLoss e;
    e.clean = cnt_clean > 0 ? sum_clean / cnt_clean : 0.0;
    if (has_poison) e.poison = cnt_pois > 0 ? sum_pois / cnt_pois : 0.0;
    e.total = cfg.lambda_clean * e.clean +
              (e.poison ? cfg.lambda_poison * *e.poison : 0.0);
    if (!std::isfinite(e.total)) {
      throw NumericalError("train_backdoor: non-finite loss at epoch " +
                           std::to_string(epoch) + " of " +
                           std::to_string(cfg.epochs));
    }
    out.curve.push_back(e);
  }
  return out;
}

Image infer(const models::SrModel& model, const Image& lr) {
  return models::sr_forward(model, lr);
}

// ---------------------------------------------------------------------------
// Dataset persistence

namespace {

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return buf;
}

}  // namespace

void save_dataset(const SRDataset& ds, const std::string& dir,
                  const json& extra_manifest) {
  fs::create_directories(fs::path(dir) / "lr");
  fs::create_directories(fs::path(dir) / "hr");
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    imaging::write_png((fs::path(dir) / "lr" / index_name(static_cast<int>(i))).string(),
                       ds.samples[i].lr);
    imaging::write_png((fs::path(dir) / "hr" / index_name(static_cast<int>(i))).string(),
                       ds.samples[i].hr);
  }
  json manifest;
  manifest["count"] = ds.samples.size();
  manifest["scale"] = ds.scale;
  manifest["rate"] = ds.rate;
  manifest["corpus_seed"] = ds.corpus_seed;
  manifest["poison_indices"] = ds.poison_indices;
  json records = json::array();
  for (const auto& r : ds.poison_records) {
    records.push_back({{"index", r.index},
                       {"feature_distance", r.feature_distance},
                       {"l2_used", r.l2_used}});
  }
  manifest["poison_records"] = records;
  for (auto& [key, value] : extra_manifest.items()) manifest[key] = value;
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw IoError("save_dataset: cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

SRDataset load_dataset(const std::string& dir) {
  fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw MissingArtifact("dataset not found: " + manifest_path.string());
  }
  std::ifstream f(manifest_path);
  json manifest = json::parse(f);

  SRDataset ds;
  const int count = manifest.at("count").get<int>();
  ds.scale = manifest.at("scale").get<int>();
  ds.rate = manifest.at("rate").get<double>();
  ds.corpus_seed = manifest.at("corpus_seed").get<std::uint64_t>();
  ds.poison_indices = manifest.at("poison_indices").get<std::vector<int>>();
  for (const auto& r : manifest.at("poison_records")) {
    ds.poison_records.push_back({r.at("index").get<int>(),
                                 r.at("feature_distance").get<double>(),
                                 r.at("l2_used").get<double>()});
  }
  ds.samples.resize(count);
  std::vector<uint8_t> poisoned(count, 0);
  for (int i : ds.poison_indices) poisoned.at(i) = 1;
  nn::parallel_for(count, [&](int i) {
    ds.samples[i].lr = imaging::read_png((fs::path(dir) / "lr" / index_name(i)).string());
    ds.samples[i].hr = imaging::read_png((fs::path(dir) / "hr" / index_name(i)).string());
    ds.samples[i].poisoned = poisoned[i] != 0;
    ds.samples[i].source_id = "disk-" + std::to_string(i);
  });
  return ds;
}

std::string image_content_hash(const Image& img) {
  std::string bytes;
  bytes.reserve(img.data.size());
  for (float v : img.data) bytes.push_back(static_cast<char>(quantize8(v)));
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace badsr::pipeline
