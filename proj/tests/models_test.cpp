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

#include "badsr/models.hpp"
#include "badsr/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace badsr;

namespace {

// Central finite differences through the double-precision mirror net. The
// step sits inside the smoothness window between ReLU kinks; h = 1e-3 is
// already coarse enough to cross them on an 8x8 input.
constexpr double kFdStep = 1e-4;

double fd_input_grad(const oracle::DoubleNet& dnet, const oracle::DTensor& x,
                     size_t coord, const std::function<double(const oracle::DTensor&)>& loss,
                     double h = kFdStep) {
  oracle::DTensor xp = x, xm = x;
  xp.v[coord] += h;
  xm.v[coord] -= h;
  return (loss(dnet.forward(xp)) - loss(dnet.forward(xm))) / (2.0 * h);
}

// A coordinate is testable when halving the step leaves the estimate stable;
// otherwise the interval straddles a kink and FD is not an oracle there.
bool fd_stable(double fd_h, double fd_h2) {
  return std::abs(fd_h - fd_h2) <= 1e-3 * std::max({std::abs(fd_h), std::abs(fd_h2), 1e-4});
}

double rel_err(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-4});
  return std::abs(a - b) / denom;
}

double mse_loss_d(const oracle::DTensor& out, const oracle::DTensor& target) {
  double acc = 0.0;
  for (size_t i = 0; i < out.v.size(); ++i) {
    double d = out.v[i] - target.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(out.v.size());
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("sr_forward: shape contract and finiteness") {
  models::SrModel model({4, 32, 4}, 99);
  Rng rng(1);
  for (int size : {8, 12, 16}) {
    Image lr = testutil::random_image(rng, size, size, 3);
    Image out = models::sr_forward(model, lr);
    CHECK(out.height == 4 * size);
    CHECK(out.width == 4 * size);
    CHECK(out.channels == 3);
    for (float v : out.data) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  Image constant(8, 8, 3, 0.4f);
  Image out = models::sr_forward(model, constant);
  for (float v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("init determinism: same seed gives identical params and outputs") {
  models::SrModel a({4, 32, 4}, 1234), b({4, 32, 4}, 1234);
  REQUIRE(a.net().param_count() == b.net().param_count());
  for (size_t i = 0; i < a.net().param_count(); ++i) {
    CHECK(a.net().param(i).v == b.net().param(i).v);
  }
  Rng rng(5);
  Image lr = testutil::random_image(rng, 8, 8, 3);
  CHECK(models::sr_forward(a, lr).data == models::sr_forward(b, lr).data);

  models::SrModel c({4, 32, 4}, 1235);
  bool any_diff = false;
  for (size_t i = 0; i < a.net().param_count() && !any_diff; ++i) {
    any_diff = a.net().param(i).v != c.net().param(i).v;
  }
  CHECK(any_diff);
}

TEST_CASE("forward matches the double-precision mirror") {
  models::SrModel model({2, 8, 4}, 7);
  oracle::DoubleNet dnet = oracle::DoubleNet::mirror(model.net());
  Rng rng(8);
  Image lr = testutil::random_image(rng, 8, 8, 3);

  nn::Tensor out = model.forward_raw(nn::from_image(lr));
  oracle::DTensor dout = dnet.forward(oracle::to_dtensor(lr));
  REQUIRE(out.v.size() == dout.v.size());
  for (size_t i = 0; i < out.v.size(); ++i) {
    CHECK(out.v[i] == doctest::Approx(dout.v[i]).epsilon(2e-4));
  }
}

TEST_CASE("input_gradient: linear 1x1 model equals the transposed map on sum loss") {
  // Sum loss over a 1x1 conv: d(sum out)/d(x_c) = sum_o W[o][c]
  nn::Network net;
  net.add(std::make_unique<nn::Conv>(3, 2, 1));
  Rng rng(3);
  net.init(rng);

  nn::Tensor x = testutil::random_tensor(rng, 3, 4, 4, 0.0, 1.0);
  nn::Tape tape;
  nn::Tensor out = net.forward(x, &tape);
  nn::Tensor g = net.backward(tape, nn::Tensor(out.c, out.h, out.w, 1.0f));

  const auto& w = net.param(0).v;  // [out=2][in=3]
  for (int c = 0; c < 3; ++c) {
    double expect = w[0 * 3 + c] + w[1 * 3 + c];
    for (int y = 0; y < 4; ++y) {
      for (int xx = 0; xx < 4; ++xx) {
        CHECK(g.at(c, y, xx) == doctest::Approx(expect).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("input_gradient matches central finite differences") {
  models::SrModel model({2, 8, 4}, 17);
  Rng rng(18);
  Image x = testutil::random_image(rng, 8, 8, 3);
  Image target_img = testutil::random_image(rng, 32, 32, 3);
  nn::Tensor target = nn::from_image(target_img);

  models::MseLoss loss(target);
  nn::Tensor g = models::input_gradient(model, x, loss);

  oracle::DoubleNet dnet = oracle::DoubleNet::mirror(model.net());
  oracle::DTensor dx = oracle::to_dtensor(x);
  oracle::DTensor dtarget = oracle::to_dtensor(target);
  auto loss_fn = [&](const oracle::DTensor& out) {
    return mse_loss_d(out, dtarget);
  };

  int checked = 0;
  for (int trial = 0; trial < 80 && checked < 40; ++trial) {
    size_t coord = rng.uniform_int(static_cast<std::uint32_t>(dx.v.size()));
    double fd = fd_input_grad(dnet, dx, coord, loss_fn);
    double fd2 = fd_input_grad(dnet, dx, coord, loss_fn, kFdStep / 2.0);
    if (!fd_stable(fd, fd2)) continue;  // kink in the interval
    CHECK(rel_err(fd2, g.v[coord]) <= 1e-3);
    ++checked;
  }
  CHECK(checked >= 40);
}

TEST_CASE("input_gradient: constant input and shift-invariant loss give a uniform interior") {
  models::SrModel model({2, 8, 4}, 23);
  Image x(16, 16, 3, 0.0f);
  models::SumLoss loss;
  nn::Tensor g = models::input_gradient(model, x, loss);
  // interior: away from the replicate-padding boundary halo
  for (int c = 0; c < 3; ++c) {
    float center = g.at(c, 8, 8);
    for (int y = 6; y < 10; ++y) {
      for (int xx = 6; xx < 10; ++xx) {
        CHECK(g.at(c, y, xx) == doctest::Approx(center).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("input_gradient: non-differentiable loss spec is rejected") {
  models::SrModel model({2, 8, 4}, 29);
  Image x(8, 8, 3, 0.5f);
  models::ThresholdCountLoss loss(0.5);
  CHECK(loss.value(model.forward_raw(nn::from_image(x))) >= 0.0);
  CHECK_THROWS_AS(models::input_gradient(model, x, loss), UnsupportedLoss);
}

TEST_CASE("param_gradient_norm: zero loss, determinism, closed form") {
  SUBCASE("exact fit gives zero gradient") {
    // 1x1 conv toy: W = I-ish via a single channel pass-through is not
    // expressible; instead check the generic property loss == 0 -> g == 0
    // by using the model's own output as the target.
    models::SrModel model({2, 8, 4}, 31);
    Rng rng(32);
    Image x = testutil::random_image(rng, 8, 8, 3);
    Image y = nn::to_image(model.forward_raw(nn::from_image(x)), false);
    // clamp may modify values outside [0,1]; rebuild target from raw output
    nn::Tensor raw = model.forward_raw(nn::from_image(x));
    Image target(32, 32, 3);
    for (int c = 0; c < 3; ++c) {
      for (int yy = 0; yy < 32; ++yy) {
        for (int xx = 0; xx < 32; ++xx) target.at(yy, xx, c) = raw.at(c, yy, xx);
      }
    }
    (void)y;
    CHECK(models::param_gradient_norm(model, x, target) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("duplicate samples give identical scores") {
    models::SrModel model({4, 32, 4}, 33);
    Rng rng(34);
    Image x = testutil::random_image(rng, 8, 8, 3);
    Image y = testutil::random_image(rng, 32, 32, 3);
    CHECK(models::param_gradient_norm(model, x, y) ==
          models::param_gradient_norm(model, x, y));
  }

  SUBCASE("single linear layer matches 2||(Wx - y) x^T||_F with bias term") {
    // 2x2 toy: 1x1 conv on a 1x1 spatial grid is exactly out = Wx + b.
    nn::Network net;
    net.add(std::make_unique<nn::Conv>(2, 2, 1));
    net.param(0).v = {0.7f, -0.3f, 0.2f, 0.5f};  // row-major W
    net.param(1).v = {0.0f, 0.0f};

    nn::Tensor x(2, 1, 1);
    x.v = {0.4f, -0.6f};
    nn::Tensor y(2, 1, 1);
    y.v = {0.1f, 0.3f};

    nn::Tape tape;
    nn::Tensor out = net.forward(x, &tape);
    // squared loss sum (e = 2(Wx - y)): dW = e x^T, db = e
    nn::Tensor dout(2, 1, 1);
    double e0 = 2.0 * (out.v[0] - y.v[0]);
    double e1 = 2.0 * (out.v[1] - y.v[1]);
    dout.v = {static_cast<float>(e0), static_cast<float>(e1)};
    nn::Gradients g = net.alloc_grads();
    net.backward(tape, dout, &g);

    double expected_sq = e0 * e0 * (0.4 * 0.4 + 0.6 * 0.6) +
                         e1 * e1 * (0.4 * 0.4 + 0.6 * 0.6) +  // weight part
                         e0 * e0 + e1 * e1;                    // bias part
    CHECK(g.l2_norm() == doctest::Approx(std::sqrt(expected_sq)).epsilon(1e-5));
  }
}

TEST_CASE("param gradients match finite differences on sampled coordinates") {
  models::SrModel model({2, 8, 4}, 41);
  Rng rng(42);
  Image x = testutil::random_image(rng, 8, 8, 3);
  Image y = testutil::random_image(rng, 32, 32, 3);

  nn::Tape tape;
  nn::Tensor out = model.forward_raw(nn::from_image(x), &tape);
  models::MseLoss loss(nn::from_image(y));
  nn::Gradients g = model.net().alloc_grads();
  model.net().backward(tape, loss.grad(out), &g);

  oracle::DoubleNet dnet = oracle::DoubleNet::mirror(model.net());
  oracle::DTensor dx = oracle::to_dtensor(x);
  oracle::DTensor dy = oracle::to_dtensor(nn::from_image(y));

  auto fd_param = [&](size_t slot, size_t off, double h) {
    oracle::DoubleNet d2 = dnet;
    double orig = d2.get_param(slot, off);
    d2.set_param(slot, off, orig + h);
    double lp = mse_loss_d(d2.forward(dx), dy);
    d2.set_param(slot, off, orig - h);
    double lm = mse_loss_d(d2.forward(dx), dy);
    return (lp - lm) / (2.0 * h);
  };

  int checked = 0;
  for (int trial = 0; trial < 80 && checked < 40; ++trial) {
    size_t slot = rng.uniform_int(static_cast<std::uint32_t>(dnet.param_count()));
    size_t off = rng.uniform_int(static_cast<std::uint32_t>(dnet.param_size(slot)));
    double fd = fd_param(slot, off, kFdStep);
    double fd2 = fd_param(slot, off, kFdStep / 2.0);
    if (!fd_stable(fd, fd2)) continue;
    CHECK(rel_err(fd2, g.g[slot][off]) <= 1e-3);
    ++checked;
  }
  CHECK(checked >= 40);
}

TEST_CASE("feature extractor: taps, determinism, sensitivity") {
  models::SrModel model({4, 32, 4}, 51);
  auto fe = models::FeatureExtractor::from_sr_model(model);
  REQUIRE(fe.taps().size() == 3);
  CHECK(fe.tap_weights()[0] == doctest::Approx(1.0 / 3.0));

  Rng rng(52);
  Image img = testutil::natural_image(rng, 16, 16, 3);
  auto f1 = models::extract_features(fe, img);
  auto f2 = models::extract_features(fe, img);
  REQUIRE(f1.size() == 3);
  for (size_t t = 0; t < 3; ++t) CHECK(f1[t].v == f2[t].v);
  CHECK(f1[0].c == 32);
  CHECK(f1[0].h == 16);

  SUBCASE("tiny perturbations move features only slightly") {
    Image nudged = img;
    nudged.data[40] = clamp01(nudged.data[40] + 1e-4f);
    auto fn = models::extract_features(fe, nudged);
    double dist = models::feature_distance(f1, fn);
    CHECK(dist < 1e-3);
    CHECK(dist >= 0.0);
  }

  SUBCASE("unrelated images are farther apart than a one-pixel shift") {
    Image shifted(16, 16, 3);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) {
          shifted.at(y, x, c) = img.at(y, std::max(0, x - 1), c);
        }
      }
    }
    Image other = testutil::natural_image(rng, 16, 16, 3);
    double d_shift = models::feature_distance(f1, models::extract_features(fe, shifted));
    double d_other = models::feature_distance(f1, models::extract_features(fe, other));
    CHECK(d_other > d_shift);
  }
}

TEST_CASE("feature extractor taps match the substitute prefix activations") {
  models::SrModel model({4, 16, 4}, 53);
  auto fe = models::FeatureExtractor::from_sr_model(model);
  oracle::DoubleNet dnet = oracle::DoubleNet::mirror(fe.net());
  Rng rng(54);
  Image img = testutil::random_image(rng, 8, 8, 3);
  auto taps = fe.extract(nn::from_image(img));
  auto dtaps = dnet.forward_taps(oracle::to_dtensor(img), fe.taps());
  REQUIRE(taps.size() == dtaps.size());
  for (size_t t = 0; t < taps.size(); ++t) {
    for (size_t i = 0; i < taps[t].v.size(); ++i) {
      CHECK(taps[t].v[i] == doctest::Approx(dtaps[t].v[i]).epsilon(2e-4));
    }
  }
}

TEST_CASE("detector: separable classes clear the gate, shuffled labels do not") {
  Rng rng(61);
  pipeline::CorpusSpec spec;
  spec.count = 40;
  spec.hr_size = 32;
  spec.seed = 987;
  auto hrs = pipeline::synthesize_corpus(spec);
  Image target = pipeline::target_emblem(32);

  SUBCASE("positives are exact target copies") {
    std::vector<Image> positives(40, target);
    models::DetectorTrainConfig cfg;
    cfg.epochs = 15;
    auto res = models::train_detector(hrs, positives, 7, cfg);
    CHECK(res.val_accuracy >= 0.99);
    CHECK(res.detector.predict(target) >= 0.5);
  }

  SUBCASE("randomized labels land near chance and are rejected") {
    // both classes drawn from the same distribution: nothing to learn
    pipeline::CorpusSpec big = spec;
    big.count = 160;
    big.seed = 988;
    auto pool = pipeline::synthesize_corpus(big);
    std::vector<Image> negatives(pool.begin(), pool.begin() + 80);
    std::vector<Image> positives(pool.begin() + 80, pool.end());
    models::DetectorTrainConfig cfg;
    cfg.epochs = 8;
    cfg.val_fraction = 0.3;
    try {
      models::train_detector(negatives, positives, 11, cfg);
      FAIL("indistinguishable classes should not clear the 0.85 gate");
    } catch (const DetectorRejected& e) {
      CHECK(e.accuracy >= 0.3);
      CHECK(e.accuracy <= 0.7);
    }
  }
}

TEST_CASE("checkpoint roundtrip is bitwise") {
  testutil::TempDir tmp("ckpt");
  models::SrModel model({3, 16, 4}, 71);
  models::save_sr_model(model, tmp.str());
  models::SrModel back = models::load_sr_model(tmp.str());
  REQUIRE(back.net().param_count() == model.net().param_count());
  for (size_t i = 0; i < model.net().param_count(); ++i) {
    CHECK(back.net().param(i).v == model.net().param(i).v);
  }
  CHECK(back.arch().blocks == 3);
  CHECK_THROWS_AS(models::load_sr_model(tmp.str() + "/nope"), MissingArtifact);
}

TEST_SUITE_END();
