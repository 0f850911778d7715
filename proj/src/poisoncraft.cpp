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
#include <limits>

#include <nlohmann/json.hpp>

#include "badsr/poisoncraft.hpp"

namespace badsr::poison {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kZeroNormGuard = 1e-12;

// Squared feature distance and its gradient seeds (2 * (f_a - f_b) per tap).
double distance_and_tap_grads(const std::vector<nn::Tensor>& f_a,
                              const std::vector<nn::Tensor>& f_b,
                              std::vector<nn::Tensor>* tap_grads) {
  double dist = 0.0;
  if (tap_grads) tap_grads->clear();
  for (size_t t = 0; t < f_a.size(); ++t) {
    nn::Tensor g(f_a[t].c, f_a[t].h, f_a[t].w);
    for (size_t i = 0; i < f_a[t].v.size(); ++i) {
      double d = static_cast<double>(f_a[t].v[i]) - f_b[t].v[i];
      dist += d * d;
      g.v[i] = static_cast<float>(2.0 * d);
    }
    if (tap_grads) tap_grads->push_back(std::move(g));
  }
  return dist;
}

// Projects img onto the L2 ball of radius eps centered at origin, in place.
// Both are in [0, 1]; projection is a convex combination, so the box
// constraint is preserved.
void project_ball(Image& img, const Image& origin, double eps) {
  if (eps <= 0.0) {
    img = origin;
    return;
  }
  double norm = l2_distance(img, origin);
  if (norm <= eps || norm < kZeroNormGuard) return;
  const double scale = eps / norm;
  for (size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<float>(origin.data[i] +
                                     scale * (img.data[i] - origin.data[i]));
  }
}

struct LpipsEval {
  double value = 0.0;
  std::vector<nn::Tensor> tap_grads_b;  // d(value)/d(f_b) per tap
};

// LPIPS from precomputed tap features; gradient with respect to the second
// argument's features.
LpipsEval lpips_from_features(const std::vector<nn::Tensor>& f_a,
                              const std::vector<nn::Tensor>& f_b,
                              const std::vector<double>& weights,
                              bool want_grad) {
  LpipsEval ev;
  for (size_t t = 0; t < f_a.size(); ++t) {
    const nn::Tensor& fa = f_a[t];
    const nn::Tensor& fb = f_b[t];
    if (!fa.same_shape(fb)) {
      throw InvalidArgument("lpips: tap shape mismatch");
    }
    const int c = fa.c, h = fa.h, w = fa.w;
    const size_t plane = static_cast<size_t>(h) * w;
    const double pos_w = weights[t] / static_cast<double>(plane);
    nn::Tensor grad;
    if (want_grad) grad = nn::Tensor(c, h, w);

    std::vector<double> ua(c), ub(c);
    for (size_t p = 0; p < plane; ++p) {
      double na = 0.0, nb = 0.0;
      for (int ci = 0; ci < c; ++ci) {
        double va = fa.v[ci * plane + p];
        double vb = fb.v[ci * plane + p];
        na += va * va;
        nb += vb * vb;
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      for (int ci = 0; ci < c; ++ci) {
        ua[ci] = na < kZeroNormGuard ? 0.0 : fa.v[ci * plane + p] / na;
        ub[ci] = nb < kZeroNormGuard ? 0.0 : fb.v[ci * plane + p] / nb;
      }
      double diff_sq = 0.0, diff_dot_ub = 0.0;
      for (int ci = 0; ci < c; ++ci) {
        double d = ub[ci] - ua[ci];
        diff_sq += d * d;
        diff_dot_ub += d * ub[ci];
      }
      ev.value += pos_w * diff_sq;
      if (want_grad && nb >= kZeroNormGuard) {
        // d/d(vb) ||ub - ua||^2 = (2 / nb) (I - ub ub^T)(ub - ua)
        const double s = 2.0 * pos_w / nb;
        for (int ci = 0; ci < c; ++ci) {
          double d = ub[ci] - ua[ci];
          grad.v[ci * plane + p] =
              static_cast<float>(s * (d - diff_dot_ub * ub[ci]));
        }
      }
    }
    if (want_grad) ev.tap_grads_b.push_back(std::move(grad));
  }
  return ev;
}

}  // namespace

HrPoisonResult generate_poisoned_hr(const Image& y, const Image& y_target,
                                    const models::FeatureExtractor& fe,
                                    const HrPoisonConfig& cfg) {
  cfg.validate();
  if (!y.same_shape(y_target)) {
    throw InvalidArgument("generate_poisoned_hr: shape mismatch " +
                          y.shape_str() + " vs " + y_target.shape_str());
  }
  const double eps = cfg.epsilon_for(y);
  const std::vector<nn::Tensor> f_target = fe.extract(nn::from_image(y_target));

  HrPoisonResult res;
  res.y_p = y;
  {
    auto f0 = fe.extract(nn::from_image(y));
    res.initial_distance = distance_and_tap_grads(f0, f_target, nullptr);
  }
  res.feature_distance = res.initial_distance;

  Image current = y;
  std::vector<nn::Tensor> tap_grads;
  for (int it = 0; it < cfg.iters; ++it) {
    nn::Tape tape;
    auto feats = fe.extract(nn::from_image(current), &tape);
    double dist = distance_and_tap_grads(feats, f_target, &tap_grads);
    if (!std::isfinite(dist)) {
      throw NumericalError(
          "generate_poisoned_hr: non-finite feature distance at iteration " +
          std::to_string(it));
    }
    nn::Tensor grad = fe.backward(tape, tap_grads);

    for (int c = 0; c < current.channels; ++c) {
      for (int yy = 0; yy < current.height; ++yy) {
        for (int xx = 0; xx < current.width; ++xx) {
          current.at(yy, xx, c) = static_cast<float>(
              current.at(yy, xx, c) - cfg.lr * grad.at(c, yy, xx));
        }
      }
    }
    current.clamp();
    project_ball(current, y, eps);
    res.iters_run = it + 1;

    double post = distance_and_tap_grads(fe.extract(nn::from_image(current)),
                                         f_target, nullptr);
    if (!std::isfinite(post)) {
      throw NumericalError(
          "generate_poisoned_hr: non-finite feature distance after projection "
          "at iteration " + std::to_string(it));
    }
    // best-iterate acceptance keeps the reported distance monotone
    if (post < res.feature_distance) {
      res.feature_distance = post;
      res.y_p = current;
    }
    if (cfg.kappa && res.feature_distance <= *cfg.kappa) break;
  }
  res.l2_used = l2_distance(res.y_p, y);
  return res;
}

double dynamic_penalty(double delta_norm, double tau) {
  if (delta_norm < 0.0 || tau < 0.0) {
    throw InvalidArgument("dynamic_penalty: arguments must be >= 0");
  }
  return delta_norm <= tau ? 0.0 : delta_norm - tau;
}

double lpips_distance(const models::FeatureExtractor& fe, const Image& a,
                      const Image& b) {
  if (!a.same_shape(b)) {
    throw InvalidArgument("lpips_distance: shape mismatch " + a.shape_str() +
                          " vs " + b.shape_str());
  }
  auto f_a = fe.extract(nn::from_image(a));
  auto f_b = fe.extract(nn::from_image(b));
  return lpips_from_features(f_a, f_b, fe.tap_weights(), false).value;
}

TriggerArtifact optimize_trigger(const std::vector<Image>& lr_batch,
                                 const std::vector<Image>& hr_batch,
                                 const models::SrModel& model,
                                 const models::FeatureExtractor& fe,
                                 const TriggerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (lr_batch.empty() || lr_batch.size() != hr_batch.size()) {
    throw InvalidArgument("optimize_trigger: need a non-empty aligned batch");
  }
  for (size_t i = 0; i < lr_batch.size(); ++i) {
    if (!lr_batch[i].same_shape(lr_batch[0])) {
      throw InvalidArgument("optimize_trigger: LR shapes must be identical");
    }
    if (hr_batch[i].height != 4 * lr_batch[i].height ||
        hr_batch[i].width != 4 * lr_batch[i].width ||
        hr_batch[i].channels != lr_batch[i].channels) {
      throw InvalidArgument("optimize_trigger: HR/LR pair " + std::to_string(i) +
                            " is not x4 aligned");
    }
  }

  const int n = static_cast<int>(lr_batch.size());
  const Image& proto = lr_batch[0];
  const size_t numel = proto.size();
  const double tau = cfg.tau_rms * std::sqrt(static_cast<double>(numel));
  const float budget = static_cast<float>(cfg.linf_budget);

  TriggerArtifact art;
  art.config = cfg;
  art.seed = seed;
  art.delta = nn::Tensor(proto.channels, proto.height, proto.width);
  {
    Rng rng(seed);
    for (float& d : art.delta.v) {
      d = std::clamp(static_cast<float>(rng.normal(0.0, cfg.init_sigma)),
                     -budget, budget);
    }
  }

  std::vector<nn::Tensor> xs(n);
  std::vector<nn::Tensor> ys(n);
  std::vector<std::vector<nn::Tensor>> f_clean(n);
  nn::parallel_for(n, [&](int i) {
    xs[i] = nn::from_image(lr_batch[i]);
    ys[i] = nn::from_image(hr_batch[i]);
    f_clean[i] = fe.extract(xs[i]);
  });

  nn::Tensor delta = art.delta;
  nn::Tensor best_delta = delta;
  double best_obj = -std::numeric_limits<double>::infinity();
  int best_iter = -1;

  std::vector<double> adv_vals(n), lp_vals(n);
  std::vector<nn::Tensor> grads(n);

  for (int it = 0; it < cfg.iters; ++it) {
    nn::parallel_for(n, [&](int i) {
      // x_p = clamp(x + delta); gradient passes only through the interior
      nn::Tensor xp(xs[i].c, xs[i].h, xs[i].w);
      std::vector<uint8_t> open(numel);
      for (size_t j = 0; j < numel; ++j) {
        float raw = xs[i].v[j] + delta.v[j];
        xp.v[j] = clamp01(raw);
        open[j] = (raw > 0.0f && raw < 1.0f) ? 1 : 0;
      }

      nn::Tensor g_total(xs[i].c, xs[i].h, xs[i].w);

      // Reconstruction term ||f(x_p) - y||_2, root form.
      {
        nn::Tape tape;
        nn::Tensor out = model.forward_raw(xp, cfg.lambda_adv > 0.0 ? &tape : nullptr);
        double norm_sq = 0.0;
        for (size_t j = 0; j < out.v.size(); ++j) {
          double d = static_cast<double>(out.v[j]) - ys[i].v[j];
          norm_sq += d * d;
        }
        double norm = std::sqrt(norm_sq);
        adv_vals[i] = norm;
        if (cfg.lambda_adv > 0.0 && norm >= kZeroNormGuard) {
          nn::Tensor dout(out.c, out.h, out.w);
          for (size_t j = 0; j < out.v.size(); ++j) {
            dout.v[j] = static_cast<float>(
                (static_cast<double>(out.v[j]) - ys[i].v[j]) / norm);
          }
          nn::Tensor g = model.net().backward(tape, dout);
          for (size_t j = 0; j < numel; ++j) {
            g_total.v[j] += static_cast<float>(cfg.lambda_adv) * g.v[j];
          }
        }
      }

      // Perceptual term LPIPS(x, x_p); enters the objective negatively.
      {
        nn::Tape tape;
        auto f_p = fe.extract(xp, cfg.lambda_lpips > 0.0 ? &tape : nullptr);
        auto ev = lpips_from_features(f_clean[i], f_p, fe.tap_weights(),
                                      cfg.lambda_lpips > 0.0);
        lp_vals[i] = ev.value;
        if (cfg.lambda_lpips > 0.0) {
          nn::Tensor g = fe.backward(tape, ev.tap_grads_b);
          for (size_t j = 0; j < numel; ++j) {
            g_total.v[j] -= static_cast<float>(cfg.lambda_lpips) * g.v[j];
          }
        }
      }

      for (size_t j = 0; j < numel; ++j) {
        if (!open[j]) g_total.v[j] = 0.0f;
      }
      grads[i] = std::move(g_total);
    });

    double adv_mean = 0.0, lp_mean = 0.0;
    for (int i = 0; i < n; ++i) {
      adv_mean += adv_vals[i];
      lp_mean += lp_vals[i];
    }
    adv_mean /= n;
    lp_mean /= n;

    const double delta_norm = nn::l2_norm(delta);
    const double reg = dynamic_penalty(delta_norm, tau);
    const double objective = cfg.lambda_adv * adv_mean -
                             cfg.lambda_lpips * lp_mean - cfg.lambda_reg * reg;
    art.trace.push_back({adv_mean, lp_mean, reg});
    if (!std::isfinite(objective)) {
      art.delta = best_iter >= 0 ? best_delta : delta;
      throw NumericalError(
          "optimize_trigger: non-finite objective at iteration " +
          std::to_string(it) + " (partial trace has " +
          std::to_string(art.trace.size()) + " rows)");
    }
    if (objective > best_obj) {
      best_obj = objective;
      best_delta = delta;
      best_iter = it;
    }

    nn::Tensor step(delta.c, delta.h, delta.w);
    for (int i = 0; i < n; ++i) {
      for (size_t j = 0; j < numel; ++j) step.v[j] += grads[i].v[j];
    }
    const float inv_n = 1.0f / static_cast<float>(n);
    for (size_t j = 0; j < numel; ++j) step.v[j] *= inv_n;
    if (cfg.lambda_reg > 0.0 && delta_norm > tau && delta_norm >= kZeroNormGuard) {
      const double s = cfg.lambda_reg / delta_norm;
      for (size_t j = 0; j < numel; ++j) {
        step.v[j] -= static_cast<float>(s * delta.v[j]);
      }
    }
    for (size_t j = 0; j < numel; ++j) {
      delta.v[j] = std::clamp(
          delta.v[j] + static_cast<float>(cfg.lr) * step.v[j], -budget, budget);
    }
  }

  art.delta = best_delta;
  art.best_objective = best_obj;
  art.best_iteration = best_iter;
  return art;
}

Image apply_trigger(const Image& x, const TriggerArtifact& t) {
  if (x.channels != t.delta.c || x.height != t.delta.h || x.width != t.delta.w) {
    throw InvalidArgument("apply_trigger: shape mismatch, image " +
                          x.shape_str() + " vs trigger " + t.delta.shape_str());
  }
  Image out = x;
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int xx = 0; xx < x.width; ++xx) {
        out.at(y, xx, c) = clamp01(x.at(y, xx, c) + t.delta.at(c, y, xx));
      }
    }
  }
  return out;
}

void save_trigger(const TriggerArtifact& t, const std::string& dir) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "delta.bin", std::ios::binary);
    if (!f) throw IoError("save_trigger: cannot write delta.bin in " + dir);
    f.write(reinterpret_cast<const char*>(t.delta.v.data()),
            static_cast<std::streamsize>(t.delta.v.size() * sizeof(float)));
  }
  json side = {
      {"shape", {t.delta.c, t.delta.h, t.delta.w}},
      {"seed", t.seed},
      {"best_objective", t.best_objective},
      {"best_iteration", t.best_iteration},
      {"config",
       {{"tau_rms", t.config.tau_rms},
        {"lambda_adv", t.config.lambda_adv},
        {"lambda_lpips", t.config.lambda_lpips},
        {"lambda_reg", t.config.lambda_reg},
        {"iters", t.config.iters},
        {"lr", t.config.lr},
        {"init_sigma", t.config.init_sigma},
        {"linf_budget", t.config.linf_budget}}},
  };
  json trace = json::array();
  for (const auto& row : t.trace) {
    trace.push_back({{"adv", row.adv}, {"lpips", row.lpips}, {"reg", row.reg}});
  }
  side["trace"] = trace;
  std::ofstream f(fs::path(dir) / "trigger.json");
  if (!f) throw IoError("save_trigger: cannot write trigger.json in " + dir);
  f << side.dump(2) << "\n";
}

TriggerArtifact load_trigger(const std::string& dir) {
  fs::path side_path = fs::path(dir) / "trigger.json";
  fs::path blob_path = fs::path(dir) / "delta.bin";
  if (!fs::exists(side_path) || !fs::exists(blob_path)) {
    throw MissingArtifact("trigger artifact not found in " + dir);
  }
  std::ifstream f(side_path);
  json side = json::parse(f);

  TriggerArtifact t;
  auto shape = side.at("shape");
  t.delta = nn::Tensor(shape.at(0).get<int>(), shape.at(1).get<int>(),
                       shape.at(2).get<int>());
  t.seed = side.at("seed").get<std::uint64_t>();
  t.best_objective = side.at("best_objective").get<double>();
  t.best_iteration = side.at("best_iteration").get<int>();
  const json& c = side.at("config");
  t.config.tau_rms = c.at("tau_rms").get<double>();
  t.config.lambda_adv = c.at("lambda_adv").get<double>();
  t.config.lambda_lpips = c.at("lambda_lpips").get<double>();
  t.config.lambda_reg = c.at("lambda_reg").get<double>();
  t.config.iters = c.at("iters").get<int>();
  t.config.lr = c.at("lr").get<double>();
  t.config.init_sigma = c.at("init_sigma").get<double>();
  t.config.linf_budget = c.at("linf_budget").get<double>();
  for (const auto& row : side.at("trace")) {
    t.trace.push_back({row.at("adv").get<double>(),
                       row.at("lpips").get<double>(),
                       row.at("reg").get<double>()});
  }

  std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
  const auto bytes = static_cast<size_t>(blob.tellg());
  if (bytes != t.delta.v.size() * sizeof(float)) {
    throw IoError("load_trigger: delta.bin size mismatch");
  }
  blob.seekg(0);
  blob.read(reinterpret_cast<char*>(t.delta.v.data()),
            static_cast<std::streamsize>(bytes));
  return t;
}

}  // namespace badsr::poison
