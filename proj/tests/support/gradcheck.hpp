#pragma once

// Central finite-difference checks for the network ops, shared by the unit
// tests and the acceptance binary. Every check builds a scalar loss
// L = sum(w * op(x)) with random weights w and compares the analytic
// gradient of every input and parameter tensor against
// (L(x+h) - L(x-h)) / 2h.
//
// Relative error is |a - n| / max(|a|, |n|, floor). At h = 1e-3 the floor is
// 1e-2, which makes the 1e-3 bound the usual rtol = 1e-3, atol = 1e-5 test:
// the truncation error of the difference quotient scales with the third
// derivative, not with the gradient, so near-zero components need an
// absolute allowance. Every component is also checked at h = 1e-5 with a
// floor of 1e-3, where truncation is negligible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <random>
#include <string>
#include <vector>

#include "wsvad/nn/crnn.hpp"
#include "wsvad/nn/gru.hpp"
#include "wsvad/nn/ops.hpp"

namespace wsvad::testing {

using nn::Tensor;
using Rng64 = std::mt19937_64;

inline constexpr double kFdStep = 1e-3;
inline constexpr double kFineStep = 1e-5;

struct GradReport {
  std::string op;
  int configs = 0;
  std::size_t elements = 0;
  double max_rel_error = 0.0;      // h = kFdStep, floor 1e-2
  double max_element_error = 0.0;  // h = kFineStep, floor 1e-3
};

inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::size_t uniform_int(Rng64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Tensor<double> random_tensor(nn::Shape shape, Rng64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> g(0.0, scale);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

inline std::vector<std::size_t> random_lengths(Rng64& rng, std::size_t batch,
                                               std::size_t steps) {
  std::vector<std::size_t> lengths(batch);
  for (auto& l : lengths) l = uniform_int(rng, 1, steps);
  lengths[uniform_int(rng, 0, batch - 1)] = steps;
  return lengths;
}

// Perturbs every element of `x` and folds the errors into `report`.
inline void fd_compare(Tensor<double>& x, const Tensor<double>& analytic,
                       const std::function<double()>& loss, GradReport& report) {
  auto central = [&](std::size_t i, double h) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = loss();
    x[i] = orig - h;
    const double down = loss();
    x[i] = orig;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    report.max_rel_error =
        std::max(report.max_rel_error, rel_error(analytic[i], central(i, kFdStep), 1e-2));
    report.max_element_error = std::max(
        report.max_element_error, rel_error(analytic[i], central(i, kFineStep), 1e-3));
    ++report.elements;
  }
}

inline GradReport check_conv(std::uint64_t seed, int configs = 20) {
  GradReport r{"conv2d_3x3"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 2), ci = uniform_int(rng, 1, 3);
    const std::size_t co = uniform_int(rng, 1, 3), h = uniform_int(rng, 1, 5),
                      w = uniform_int(rng, 1, 5);
    auto x = random_tensor({b, ci, h, w}, rng);
    auto k = random_tensor({co, ci, 3, 3}, rng, 0.5);
    auto bias = random_tensor({co}, rng);
    auto wt = random_tensor({b, co, h, w}, rng);
    auto loss = [&] { return weighted_sum(nn::conv2d_3x3(x, k, &bias), wt); };
    Tensor<double> gx, gk(k.shape()), gb(bias.shape());
    nn::conv2d_3x3_backward(x, k, wt, &gx, gk, &gb);
    fd_compare(x, gx, loss, r);
    fd_compare(k, gk, loss, r);
    fd_compare(bias, gb, loss, r);
  }
  return r;
}

inline GradReport check_batch_norm(std::uint64_t seed, nn::Mode mode, int configs = 20) {
  GradReport r{mode == nn::Mode::kTrain ? "batch_norm(train)" : "batch_norm(eval)"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 3), ch = uniform_int(rng, 1, 3);
    const std::size_t t = uniform_int(rng, 2, 6), d = uniform_int(rng, 1, 4);
    auto lengths = random_lengths(rng, b, t);
    auto x = random_tensor({b, ch, t, d}, rng, 2.0);
    auto scale = random_tensor({ch}, rng);
    auto shift = random_tensor({ch}, rng);
    auto rm = random_tensor({ch}, rng);
    Tensor<double> rv({ch});
    for (auto& v : rv.values()) v = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    auto wt = random_tensor(x.shape(), rng);
    auto run = [&](nn::BatchNormCache<double>* cache) {
      return mode == nn::Mode::kTrain
                 ? nn::batch_norm_train(x, lengths, scale, shift, 1e-5, cache)
                 : nn::batch_norm_eval(x, lengths, scale, shift, rm, rv, 1e-5, cache);
    };
    auto loss = [&] { return weighted_sum(run(nullptr), wt); };
    nn::BatchNormCache<double> cache;
    run(&cache);
    Tensor<double> gx, gs(scale.shape()), gsh(shift.shape());
    nn::batch_norm_backward(wt, scale, cache, &gx, gs, gsh);
    fd_compare(x, gx, loss, r);
    fd_compare(scale, gs, loss, r);
    fd_compare(shift, gsh, loss, r);
  }
  return r;
}

inline GradReport check_leaky_relu(std::uint64_t seed, int configs = 20) {
  GradReport r{"leaky_relu"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t n = uniform_int(rng, 1, 24);
    auto x = random_tensor({n}, rng);
    // Keep every element clear of the kink by more than the step.
    for (auto& v : x.values()) v = std::copysign(std::abs(v) + 0.05, v);
    auto wt = random_tensor({n}, rng);
    auto loss = [&] { return weighted_sum(nn::leaky_relu(x, 0.1), wt); };
    auto g = nn::leaky_relu_backward(nn::leaky_relu(x, 0.1), wt, 0.1);
    fd_compare(x, g, loss, r);
  }
  return r;
}

inline GradReport check_l4_pool(std::uint64_t seed, int configs = 20) {
  GradReport r{"l4_pool"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 2), ch = uniform_int(rng, 1, 2);
    const std::size_t t = uniform_int(rng, 1, 7), d = uniform_int(rng, 1, 7);
    const std::size_t st = uniform_int(rng, 1, 3), sd = uniform_int(rng, 1, 3);
    auto x = random_tensor({b, ch, t, d}, rng);
    // The pooled norm is singular at an all-zero window; stay well clear of
    // it relative to the step.
    for (auto& v : x.values()) v = std::copysign(std::abs(v) + 0.2, v);
    const auto y = nn::l4_pool(x, st, sd);
    auto wt = random_tensor(y.shape(), rng);
    auto loss = [&] { return weighted_sum(nn::l4_pool(x, st, sd), wt); };
    auto g = nn::l4_pool_backward(x, y, wt, st, sd);
    fd_compare(x, g, loss, r);
  }
  return r;
}

inline GradReport check_bigru(std::uint64_t seed, int configs = 20) {
  GradReport r{"bigru"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 2), t = uniform_int(rng, 1, 4);
    const std::size_t f = uniform_int(rng, 1, 3), h = uniform_int(rng, 1, 3);
    auto lengths = random_lengths(rng, b, t);
    auto x = random_tensor({b, t, f}, rng);
    std::vector<Tensor<double>> w;
    for (int dir = 0; dir < 2; ++dir) {
      w.push_back(random_tensor({3 * h, f}, rng, 0.7));
      w.push_back(random_tensor({3 * h, h}, rng, 0.7));
      w.push_back(random_tensor({3 * h}, rng, 0.5));
      w.push_back(random_tensor({3 * h}, rng, 0.5));
    }
    auto weights = [&](int dir) {
      return nn::GruWeights<double>{&w[4 * dir], &w[4 * dir + 1], &w[4 * dir + 2],
                                    &w[4 * dir + 3]};
    };
    auto wt = random_tensor({b, t, 2 * h}, rng);
    auto loss = [&] {
      return weighted_sum(nn::bigru_forward(x, lengths, weights(0), weights(1)), wt);
    };
    nn::BiGruCache<double> cache;
    nn::bigru_forward(x, lengths, weights(0), weights(1), &cache);
    std::vector<Tensor<double>> g;
    for (const auto& t_ : w) g.emplace_back(t_.shape());
    Tensor<double> gx;
    nn::bigru_backward(x, weights(0), weights(1), cache, wt, &gx,
                       nn::GruGrads<double>{&g[0], &g[1], &g[2], &g[3]},
                       nn::GruGrads<double>{&g[4], &g[5], &g[6], &g[7]});
    fd_compare(x, gx, loss, r);
    for (std::size_t i = 0; i < w.size(); ++i) fd_compare(w[i], g[i], loss, r);
  }
  return r;
}

inline GradReport check_linear(std::uint64_t seed, int configs = 20) {
  GradReport r{"linear"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 2), t = uniform_int(rng, 1, 4);
    const std::size_t f = uniform_int(rng, 1, 5), e = uniform_int(rng, 1, 3);
    auto x = random_tensor({b, t, f}, rng);
    auto w = random_tensor({e, f}, rng);
    auto bias = random_tensor({e}, rng);
    auto wt = random_tensor({b, t, e}, rng);
    auto loss = [&] { return weighted_sum(nn::linear(x, w, bias), wt); };
    Tensor<double> gx, gw(w.shape()), gb(bias.shape());
    nn::linear_backward(x, w, wt, &gx, gw, gb);
    fd_compare(x, gx, loss, r);
    fd_compare(w, gw, loss, r);
    fd_compare(bias, gb, loss, r);
  }
  return r;
}

inline GradReport check_sigmoid(std::uint64_t seed, int configs = 20) {
  GradReport r{"sigmoid"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t n = uniform_int(rng, 1, 24);
    auto x = random_tensor({n}, rng, 3.0);
    auto wt = random_tensor({n}, rng);
    auto loss = [&] { return weighted_sum(nn::sigmoid(x), wt); };
    auto g = nn::sigmoid_backward(nn::sigmoid(x), wt);
    fd_compare(x, g, loss, r);
  }
  return r;
}

inline GradReport check_upsample(std::uint64_t seed, int configs = 20) {
  GradReport r{"upsample_repeat"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 2), t = uniform_int(rng, 1, 4);
    const std::size_t e = uniform_int(rng, 1, 3), factor = uniform_int(rng, 1, 4);
    const std::size_t frames = uniform_int(rng, (t - 1) * factor + 1, t * factor);
    auto x = random_tensor({b, t, e}, rng);
    auto wt = random_tensor({b, frames, e}, rng);
    auto loss = [&] { return weighted_sum(nn::upsample_repeat(x, factor, frames), wt); };
    auto g = nn::upsample_repeat_backward(wt, factor, t);
    fd_compare(x, g, loss, r);
  }
  return r;
}

inline GradReport check_linear_softmax_pool(std::uint64_t seed, int configs = 20) {
  GradReport r{"linear_softmax_pool"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    const std::size_t b = uniform_int(rng, 1, 3), t = uniform_int(rng, 1, 8);
    const std::size_t e = uniform_int(rng, 1, 3);
    auto lengths = random_lengths(rng, b, t);
    Tensor<double> p({b, t, e});
    for (auto& v : p.values()) v = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    auto wt = random_tensor({b, e}, rng);
    auto loss = [&] { return weighted_sum(nn::linear_softmax_pool(p, lengths), wt); };
    auto g = nn::linear_softmax_pool_backward(p, lengths, wt);
    fd_compare(p, g, loss, r);
  }
  return r;
}

/// Smallest CRNN that exercises every layer type: two blocks with one
/// conv each, 4 mel bins, GRU hidden 2, two outputs.
inline nn::CrnnConfig tiny_config() {
  nn::CrnnConfig cfg;
  cfg.n_mels = 4;
  cfg.blocks = {{{2}, 2, 2}, {{2}, 2, 2}};
  cfg.gru_hidden = 2;
  cfg.num_outputs = 2;
  cfg.output_labels.clear();
  return cfg;
}

// Sign of every LeakyReLU input, in tape order.
inline std::vector<bool> relu_pattern(const nn::CrnnTape<double>& tape) {
  std::vector<bool> signs;
  for (const auto& block : tape.blocks)
    for (const auto& layer : block.layers)
      for (double v : layer.activated.values()) signs.push_back(v >= 0);
  return signs;
}

/// Full-model check on the tiny configuration, T = 8, two items of which
/// one is padded. A central difference is only meaningful where the loss is
/// smooth across the step, so a draw in which any perturbation flips the
/// side of a LeakyReLU input is discarded and redrawn.
inline GradReport check_tiny_crnn(std::uint64_t seed, nn::Mode mode, int configs = 1) {
  GradReport r{mode == nn::Mode::kTrain ? "crnn(train)" : "crnn(eval)"};
  Rng64 rng(seed);
  for (int c = 0; c < configs; ++c, ++r.configs) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("no smooth tiny-model draw found");
      nn::Crnn<double> model(tiny_config());
      model.initialize(rng());
      for (auto& p : model.params().all()) {
        if (p.name.ends_with("bn.scale") || p.name.ends_with("bn.shift")) {
          for (auto& v : p.value.values()) v += std::normal_distribution<double>(0, 0.3)(rng);
        }
        if (p.name.ends_with("running_mean")) p.value = random_tensor(p.value.shape(), rng, 0.3);
      }
      const std::size_t t = 8;
      std::vector<std::size_t> lengths{t, uniform_int(rng, 3, t)};
      auto x = random_tensor({2, t, 4}, rng);
      auto wt = random_tensor({2, t, 2}, rng);
      nn::CrnnTape<double> tape;
      model.forward(x, lengths, mode, &tape);
      const auto base = relu_pattern(tape);

      bool smooth = true;
      auto loss = [&] {
        nn::CrnnTape<double> probe;
        const double l = weighted_sum(model.forward(x, lengths, mode, &probe), wt);
        smooth = smooth && relu_pattern(probe) == base;
        return l;
      };
      model.params().zero_grad();
      model.backward(tape, wt);
      GradReport trial = r;
      for (auto& p : model.params().all()) {
        if (p.trainable) fd_compare(p.value, p.grad, loss, trial);
      }
      if (!smooth) continue;
      r = trial;
      break;
    }
  }
  return r;
}

inline std::vector<GradReport> check_all_ops(std::uint64_t seed, int configs = 20) {
  return {check_conv(seed + 1, configs),
          check_batch_norm(seed + 2, nn::Mode::kTrain, configs),
          check_batch_norm(seed + 3, nn::Mode::kEval, configs),
          check_leaky_relu(seed + 4, configs),
          check_l4_pool(seed + 5, configs),
          check_bigru(seed + 6, configs),
          check_linear(seed + 7, configs),
          check_sigmoid(seed + 8, configs),
          check_upsample(seed + 9, configs),
          check_linear_softmax_pool(seed + 10, configs)};
}

}  // namespace wsvad::testing
