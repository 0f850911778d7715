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

#include <nlohmann/json.hpp>

#include "badsr/models.hpp"

namespace badsr::models {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

nn::Network build_sr_network(const SrArch& arch) {
  nn::Network net;
  const int c = arch.channels;
  net.add(std::make_unique<nn::BicubicSkip4>());  // residual over interpolation
  net.add(std::make_unique<nn::Conv>(3, c, 3));   // stem
  for (int b = 0; b < arch.blocks; ++b) {
    net.add(std::make_unique<nn::SkipSave>());
    net.add(std::make_unique<nn::Conv>(c, c, 3));
    net.add(std::make_unique<nn::Relu>());
    net.add(std::make_unique<nn::Conv>(c, c, 3, 0.1));  // near-identity block
    net.add(std::make_unique<nn::SkipAdd>());
  }
  for (int stage = 0; stage < 2; ++stage) {  // x4 via two x2 sub-pixel stages
    net.add(std::make_unique<nn::Conv>(c, 4 * c, 3));
    net.add(std::make_unique<nn::PixelShuffle2>());
    net.add(std::make_unique<nn::Relu>());
  }
  net.add(std::make_unique<nn::Conv>(c, 3, 3, 0.1));  // head
  net.add(std::make_unique<nn::SkipAdd>());
  return net;
}

}  // namespace

SrModel::SrModel(const SrArch& arch, std::uint64_t init_seed) : arch_(arch) {
  arch_.validate();
  net_ = build_sr_network(arch_);
  Rng rng(init_seed);
  net_.init(rng);
}

nn::Tensor SrModel::forward_raw(const nn::Tensor& lr, nn::Tape* tape) const {
  if (lr.c != 3) {
    throw InvalidArgument("SrModel: expected 3-channel input, got " +
                          lr.shape_str());
  }
  return net_.forward(lr, tape);
}

Image sr_forward(const SrModel& model, const Image& lr) {
  if (lr.channels != 3) {
    throw InvalidArgument("sr_forward: expected 3-channel input");
  }
  nn::Tensor out = model.forward_raw(nn::from_image(lr));
  return nn::to_image(out, /*clamp=*/true);
}

// ---------------------------------------------------------------------------
// Losses

double SumLoss::value(const nn::Tensor& out) const {
  double acc = 0.0;
  for (float v : out.v) acc += v;
  return acc;
}

nn::Tensor SumLoss::grad(const nn::Tensor& out) const {
  return nn::Tensor(out.c, out.h, out.w, 1.0f);
}

double L2DistanceLoss::value(const nn::Tensor& out) const {
  if (!out.same_shape(target_)) {
    throw InvalidArgument("L2DistanceLoss: shape mismatch");
  }
  double acc = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    double d = static_cast<double>(out.v[i]) - target_.v[i];
    acc += d * d;
  }
  return squared_ ? acc : std::sqrt(acc);
}

nn::Tensor L2DistanceLoss::grad(const nn::Tensor& out) const {
  nn::Tensor g(out.c, out.h, out.w);
  if (squared_) {
    for (size_t i = 0; i < out.v.size(); ++i) {
      g.v[i] = 2.0f * (out.v[i] - target_.v[i]);
    }
    return g;
  }
  double norm = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    double d = static_cast<double>(out.v[i]) - target_.v[i];
    norm += d * d;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-12) return g;  // subgradient 0 at the tip
  for (size_t i = 0; i < out.v.size(); ++i) {
    g.v[i] = static_cast<float>((out.v[i] - target_.v[i]) / norm);
  }
  return g;
}

double MseLoss::value(const nn::Tensor& out) const {
  if (!out.same_shape(target_)) throw InvalidArgument("MseLoss: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    double d = static_cast<double>(out.v[i]) - target_.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(out.v.size());
}

nn::Tensor MseLoss::grad(const nn::Tensor& out) const {
  nn::Tensor g(out.c, out.h, out.w);
  const float scale = 2.0f / static_cast<float>(out.v.size());
  for (size_t i = 0; i < out.v.size(); ++i) {
    g.v[i] = scale * (out.v[i] - target_.v[i]);
  }
  return g;
}

double ThresholdCountLoss::value(const nn::Tensor& out) const {
  size_t n = 0;
  for (float v : out.v) {
    if (v > threshold_) ++n;
  }
  return static_cast<double>(n) / static_cast<double>(out.v.size());
}

nn::Tensor ThresholdCountLoss::grad(const nn::Tensor&) const {
  throw UnsupportedLoss("ThresholdCountLoss has no gradient");
}

// ---------------------------------------------------------------------------
// Gradient contracts

nn::Tensor input_gradient(const SrModel& model, const Image& x,
                          const OutputLoss& loss) {
  nn::Tape tape;
  nn::Tensor out = model.forward_raw(nn::from_image(x), &tape);
  nn::Tensor dout = loss.grad(out);
  return model.net().backward(tape, dout);
}

double param_gradient_norm(const SrModel& model, const Image& x_p,
                           const Image& y_t) {
  nn::Tape tape;
  nn::Tensor out = model.forward_raw(nn::from_image(x_p), &tape);
  if (!nn::all_finite(out)) {
    throw NumericalError("param_gradient_norm: non-finite forward output");
  }
  MseLoss loss(nn::from_image(y_t));
  nn::Gradients grads = model.net().alloc_grads();
  model.net().backward(tape, loss.grad(out), &grads);
  return grads.l2_norm();
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor FeatureExtractor::from_sr_model(const SrModel& model) {
  if (model.arch().blocks < 3) {
    throw InvalidArgument("FeatureExtractor: source model needs >= 3 blocks");
  }
  FeatureExtractor fe;
  // stem + first three residual blocks; each block spans five layers.
  // Layer 0 of the model is the global interpolation skip and is not part
  // of the feature path.
  const size_t prefix = 1 + 3 * 5;
  for (size_t i = 1; i <= prefix; ++i) {
    fe.net_.add(model.net().layer(i).clone());
  }
  fe.taps_ = {5, 10, 15};  // SkipAdd of blocks 1..3
  fe.weights_ = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  return fe;
}

std::vector<nn::Tensor> FeatureExtractor::extract(const nn::Tensor& img,
                                                  nn::Tape* tape) const {
  if (empty()) throw InvalidArgument("FeatureExtractor: uninitialized");
  if (img.c != 3) {
    throw InvalidArgument("FeatureExtractor: expected 3-channel input");
  }
  return net_.forward_taps(img, taps_, tape);
}

nn::Tensor FeatureExtractor::backward(
    const nn::Tape& tape, const std::vector<nn::Tensor>& tap_grads) const {
  return net_.backward_taps(tape, taps_, tap_grads);
}

std::vector<nn::Tensor> extract_features(const FeatureExtractor& fe,
                                         const Image& img) {
  return fe.extract(nn::from_image(img));
}

double feature_distance(const std::vector<nn::Tensor>& a,
                        const std::vector<nn::Tensor>& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("feature_distance: tap count mismatch");
  }
  double acc = 0.0;
  for (size_t t = 0; t < a.size(); ++t) {
    if (!a[t].same_shape(b[t])) {
      throw InvalidArgument("feature_distance: tap shape mismatch");
    }
    for (size_t i = 0; i < a[t].v.size(); ++i) {
      double d = static_cast<double>(a[t].v[i]) - b[t].v[i];
      acc += d * d;
    }
  }
  return acc;
}

double feature_cosine(const std::vector<nn::Tensor>& a,
                      const std::vector<nn::Tensor>& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("feature_cosine: tap count mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t t = 0; t < a.size(); ++t) {
    if (!a[t].same_shape(b[t])) {
      throw InvalidArgument("feature_cosine: tap shape mismatch");
    }
    for (size_t i = 0; i < a[t].v.size(); ++i) {
      dot += static_cast<double>(a[t].v[i]) * b[t].v[i];
      na += static_cast<double>(a[t].v[i]) * a[t].v[i];
      nb += static_cast<double>(b[t].v[i]) * b[t].v[i];
    }
  }
  double denom = std::sqrt(na) * std::sqrt(nb);
  if (denom < 1e-20) return 0.0;
  return dot / denom;
}

// ---------------------------------------------------------------------------
// Detector

namespace {

nn::Network build_detector_network() {
  nn::Network net;
  net.add(std::make_unique<nn::Conv>(3, 16, 3));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::AvgPool2>());
  net.add(std::make_unique<nn::Conv>(16, 32, 3));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::AvgPool2>());
  net.add(std::make_unique<nn::Conv>(32, 64, 3));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::AvgPool2>());
  net.add(std::make_unique<nn::Conv>(64, 64, 3));
  net.add(std::make_unique<nn::Relu>());
  net.add(std::make_unique<nn::GlobalAvgPool>());
  net.add(std::make_unique<nn::Conv>(64, 1, 1));
  return net;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Detector::Detector(std::uint64_t init_seed) {
  net_ = build_detector_network();
  Rng rng(init_seed);
  net_.init(rng);
}

double Detector::logit(const nn::Tensor& hr, nn::Tape* tape) const {
  nn::Tensor out = net_.forward(hr, tape);
  return out.v[0];
}

double Detector::predict(const Image& hr) const {
  return sigmoid(logit(nn::from_image(hr)));
}

DetectorResult train_detector(const std::vector<Image>& clean_hrs,
                              const std::vector<Image>& target_feature_hrs,
                              std::uint64_t seed,
                              const DetectorTrainConfig& cfg) {
  if (clean_hrs.empty() || target_feature_hrs.empty()) {
    throw InvalidArgument("train_detector: both classes must be non-empty");
  }

  struct Example {
    const Image* img;
    float label;
  };
  std::vector<Example> all;
  for (const Image& img : clean_hrs) all.push_back({&img, 0.0f});
  for (const Image& img : target_feature_hrs) all.push_back({&img, 1.0f});

  Rng rng(derive_seed(seed, "detector-split"));
  for (size_t i = all.size(); i > 1; --i) {
    std::swap(all[i - 1], all[rng.uniform_int(static_cast<std::uint32_t>(i))]);
  }
  size_t n_val = std::max<size_t>(1, static_cast<size_t>(all.size() * cfg.val_fraction));
  if (n_val >= all.size()) n_val = all.size() - 1;
  std::vector<Example> val(all.begin(), all.begin() + n_val);
  std::vector<Example> train(all.begin() + n_val, all.end());

  Detector det(derive_seed(seed, "detector-init"));
  nn::Network& net = det.net();

  Rng shuffle_rng(derive_seed(seed, "detector-shuffle"));
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const int batch = std::max(1, cfg.batch_size);
  std::vector<nn::Gradients> sample_grads(batch);
  for (auto& g : sample_grads) g = net.alloc_grads();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1],
                order[shuffle_rng.uniform_int(static_cast<std::uint32_t>(i))]);
    }
    for (size_t start = 0; start < order.size(); start += batch) {
      const int bn = static_cast<int>(std::min<size_t>(batch, order.size() - start));
      nn::parallel_for(bn, [&](int bi) {
        const Example& ex = train[order[start + bi]];
        nn::Tape tape;
        double z = det.logit(nn::from_image(*ex.img), &tape);
        // d(BCE)/d(logit) = sigmoid(z) - y, averaged over the batch
        float dz = static_cast<float>((sigmoid(z) - ex.label) / bn);
        nn::Tensor dout(1, 1, 1);
        dout.v[0] = dz;
        sample_grads[bi].zero();
        net.backward(tape, dout, &sample_grads[bi]);
      });
      nn::Gradients total = net.alloc_grads();
      for (int bi = 0; bi < bn; ++bi) total.add_scaled(sample_grads[bi], 1.0f);
      net.sgd_step(total, cfg.lr);
    }
  }

  std::vector<uint8_t> correct(val.size(), 0);
  nn::parallel_for(static_cast<int>(val.size()), [&](int i) {
    double p = det.predict(*val[i].img);
    correct[i] = ((p >= 0.5) == (val[i].label > 0.5f)) ? 1 : 0;
  });
  size_t n_correct = 0;
  for (uint8_t c : correct) n_correct += c;
  double accuracy = static_cast<double>(n_correct) / static_cast<double>(val.size());

  if (accuracy < cfg.accuracy_gate) {
    throw DetectorRejected("train_detector: validation accuracy " +
                               std::to_string(accuracy) + " below gate " +
                               std::to_string(cfg.accuracy_gate),
                           accuracy);
  }
  return {std::move(det), accuracy};
}

std::vector<Image> make_detector_positives(const std::vector<Image>& clean_hrs,
                                           const Image& target, int count,
                                           Rng& rng) {
  if (clean_hrs.empty()) {
    throw InvalidArgument("make_detector_positives: empty clean set");
  }
  std::vector<Image> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const Image& base = clean_hrs[rng.uniform_int(
        static_cast<std::uint32_t>(clean_hrs.size()))];
    if (!base.same_shape(target)) {
      throw InvalidArgument("make_detector_positives: shape mismatch");
    }
    float alpha = static_cast<float>(rng.uniform(0.3, 1.0));
    Image blend = base;
    for (size_t j = 0; j < blend.data.size(); ++j) {
      blend.data[j] = clamp01((1.0f - alpha) * base.data[j] +
                              alpha * target.data[j]);
    }
    out.push_back(std::move(blend));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_blob(const fs::path& path, const FloatVec& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void read_blob(const fs::path& path, FloatVec& v) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot read " + path.string());
  const auto bytes = static_cast<size_t>(f.tellg());
  if (bytes != v.size() * sizeof(float)) {
    throw IoError("checkpoint blob " + path.string() + " has " +
                  std::to_string(bytes) + " bytes, expected " +
                  std::to_string(v.size() * sizeof(float)));
  }
  f.seekg(0);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(bytes));
}

}  // namespace

void save_sr_model(const SrModel& model, const std::string& dir) {
  fs::create_directories(dir);
  json arch = {{"kind", "sr"},
               {"blocks", model.arch().blocks},
               {"channels", model.arch().channels},
               {"scale", model.arch().scale}};
  std::ofstream f(fs::path(dir) / "arch.json");
  if (!f) throw IoError("cannot write arch.json in " + dir);
  f << arch.dump(2) << "\n";

  const nn::Network& net = model.net();
  auto names = net.param_names();
  for (size_t i = 0; i < net.param_count(); ++i) {
    write_blob(fs::path(dir) / (names[i] + ".bin"), net.param(i).v);
  }
}

SrModel load_sr_model(const std::string& dir) {
  fs::path arch_path = fs::path(dir) / "arch.json";
  if (!fs::exists(arch_path)) {
    throw MissingArtifact("model checkpoint not found: " + arch_path.string());
  }
  std::ifstream f(arch_path);
  json arch = json::parse(f);
  if (arch.value("kind", "") != "sr") {
    throw IoError("checkpoint " + dir + " is not an SR model");
  }
  SrArch a;
  a.blocks = arch.at("blocks").get<int>();
  a.channels = arch.at("channels").get<int>();
  a.scale = arch.at("scale").get<int>();
  SrModel model(a, /*init_seed=*/0);
  nn::Network& net = model.net();
  auto names = net.param_names();
  for (size_t i = 0; i < net.param_count(); ++i) {
    read_blob(fs::path(dir) / (names[i] + ".bin"), net.param(i).v);
  }
  return model;
}

}  // namespace badsr::models
