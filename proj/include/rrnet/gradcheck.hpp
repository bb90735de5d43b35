#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rrnet/model.hpp"
#include "rrnet/ops.hpp"
#include "rrnet/tensor.hpp"

// Central finite-difference verification of every differentiable operation
// and of the assembled filter network. The numeric side evaluates the
// forward pass only, so it stays independent of the backward rules it
// checks. Always runs in 64-bit.

namespace rrnet {

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  Index coords_checked = 0;
};

struct GradCheckSummary {
  double max_rel_err = 0.0;
  std::vector<GradCheckReport> reports;

  void merge(const GradCheckSummary& other) {
    max_rel_err = std::max(max_rel_err, other.max_rel_err);
    reports.insert(reports.end(), other.reports.begin(), other.reports.end());
  }
};

namespace gradcheck_detail {

inline constexpr double kStep = 1e-6;
// Relative error with an absolute floor so near-zero gradients compare
// against finite-difference noise sanely.
inline double relative_error(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-4});
}

inline Tensor<double> random_tensor(std::mt19937_64& rng, Shape4 shape,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

// Uniform in [-1,-margin] u [margin,1]: keeps every value a safe distance
// from the PReLU kink so the finite-difference step cannot cross it.
inline Tensor<double> kink_safe_tensor(std::mt19937_64& rng, Shape4 shape,
                                       double margin = 0.05) {
  Tensor<double> t = random_tensor(rng, shape);
  for (Index i = 0; i < t.size(); ++i) {
    const double v = t.data()[i];
    const double mag = margin + std::abs(v) * (1.0 - margin);
    t.data()[i] = std::copysign(mag, v == 0.0 ? 1.0 : v);
  }
  return t;
}

// Separates the top two values of every disjoint 2x2 window so perturbing
// by the step size cannot flip an argmax.
inline void separate_pool_windows(Tensor<double>& t, double gap = 0.05) {
  const Shape4 s = t.shape();
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      for (Index h = 0; h + 1 < s.h; h += 2) {
        for (Index w = 0; w + 1 < s.w; w += 2) {
          Index idx[4] = {t.offset(n, c, h, w), t.offset(n, c, h, w + 1),
                          t.offset(n, c, h + 1, w), t.offset(n, c, h + 1, w + 1)};
          Index best = idx[0];
          for (int i = 1; i < 4; ++i) {
            if (t.data()[idx[i]] > t.data()[best]) best = idx[i];
          }
          double second = -1e300;
          for (Index i : idx) {
            if (i != best) second = std::max(second, t.data()[i]);
          }
          if (t.data()[best] - second < gap) {
            t.data()[best] = second + gap;
          }
        }
      }
    }
  }
}

struct Target {
  std::string label;
  Tensor<double> tensor;
};

// Compares tape gradients of `targets` against central differences of the
// scalar produced by `forward`. A negative coord budget checks every
// coordinate.
inline GradCheckReport check(const std::string& name,
                             std::vector<Target> targets,
                             const std::function<Tensor<double>()>& forward,
                             Index coords_per_tensor, std::mt19937_64& rng) {
  for (Target& t : targets) {
    t.tensor.set_requires_grad(true);
    t.tensor.ensure_grad();
    t.tensor.zero_grad();
  }
  {
    Tape<double> tape;
    Tensor<double> loss = forward();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(targets.size());
  for (Target& t : targets) analytic.push_back(t.tensor.grad());

  GradCheckReport report{name, 0.0, 0};
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor<double>& t = targets[ti].tensor;
    std::vector<Index> coords(static_cast<std::size_t>(t.size()));
    std::iota(coords.begin(), coords.end(), Index(0));
    if (coords_per_tensor >= 0 &&
        coords_per_tensor < static_cast<Index>(coords.size())) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(coords_per_tensor));
    }
    for (Index i : coords) {
      const double orig = t.data()[i];
      t.data()[i] = orig + kStep;
      const double up = forward().data()[0];
      t.data()[i] = orig - kStep;
      const double down = forward().data()[0];
      t.data()[i] = orig;
      const double fd = (up - down) / (2.0 * kStep);
      const double rel = relative_error(analytic[ti][static_cast<std::size_t>(i)], fd);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace gradcheck_detail

// Exhaustive finite-difference check of each tensor operation.
inline GradCheckSummary run_op_gradient_checks(std::uint64_t seed = 20240901) {
  using namespace gradcheck_detail;
  std::mt19937_64 rng(seed);
  GradCheckSummary summary;
  auto run = [&](const std::string& name, std::vector<Target> targets,
                 const std::function<Tensor<double>()>& fwd) {
    GradCheckReport r = check(name, std::move(targets), fwd, -1, rng);
    summary.max_rel_err = std::max(summary.max_rel_err, r.max_rel_err);
    summary.reports.push_back(std::move(r));
  };

  {
    Tensor<double> in = random_tensor(rng, {2, 3, 6, 6});
    Tensor<double> w = random_tensor(rng, {4, 3, 3, 3});
    Tensor<double> b = random_tensor(rng, {1, 4, 1, 1});
    Tensor<double> label = random_tensor(rng, {2, 4, 6, 6});
    run("conv2d k3s1p1", {{"input", in}, {"weight", w}, {"bias", b}},
        [=]() { return mse_loss(conv2d(in, w, b, 1, 1), label); });
  }
  {
    Tensor<double> in = random_tensor(rng, {2, 3, 6, 6});
    Tensor<double> w = random_tensor(rng, {2, 3, 2, 2});
    Tensor<double> b = random_tensor(rng, {1, 2, 1, 1});
    Tensor<double> label = random_tensor(rng, {2, 2, 3, 3});
    run("conv2d k2s2p0", {{"input", in}, {"weight", w}, {"bias", b}},
        [=]() { return mse_loss(conv2d(in, w, b, 2, 0), label); });
  }
  {
    Tensor<double> in = random_tensor(rng, {2, 3, 4, 4});
    Tensor<double> w = random_tensor(rng, {3, 4, 2, 2});
    Tensor<double> b = random_tensor(rng, {1, 4, 1, 1});
    Tensor<double> label = random_tensor(rng, {2, 4, 8, 8});
    run("transposed_conv2d k2s2p0", {{"input", in}, {"weight", w}, {"bias", b}},
        [=]() { return mse_loss(transposed_conv2d(in, w, b, 2, 0), label); });
  }
  {
    Tensor<double> in = random_tensor(rng, {2, 2, 5, 5});
    Tensor<double> w = random_tensor(rng, {2, 3, 3, 3});
    Tensor<double> b = random_tensor(rng, {1, 3, 1, 1});
    Tensor<double> label = random_tensor(rng, {2, 3, 5, 5});
    run("transposed_conv2d k3s1p1", {{"input", in}, {"weight", w}, {"bias", b}},
        [=]() { return mse_loss(transposed_conv2d(in, w, b, 1, 1), label); });
  }
  {
    Tensor<double> in = random_tensor(rng, {2, 4, 8, 8});
    separate_pool_windows(in);
    Tensor<double> label = random_tensor(rng, {2, 4, 4, 4});
    run("maxpool2x2", {{"input", in}},
        [=]() { return mse_loss(maxpool2x2(in).values, label); });
  }
  {
    Tensor<double> in = kink_safe_tensor(rng, {2, 4, 6, 6});
    Tensor<double> slope = random_tensor(rng, {1, 4, 1, 1}, 0.05, 0.5);
    Tensor<double> label = random_tensor(rng, {2, 4, 6, 6});
    run("prelu", {{"input", in}, {"slope", slope}},
        [=]() { return mse_loss(prelu(in, slope), label); });
  }
  {
    Tensor<double> a = random_tensor(rng, {2, 3, 5, 5});
    Tensor<double> b = random_tensor(rng, {2, 2, 5, 5});
    Tensor<double> label = random_tensor(rng, {2, 5, 5, 5});
    run("concat_channels", {{"a", a}, {"b", b}},
        [=]() { return mse_loss(concat_channels(a, b), label); });
  }
  {
    Tensor<double> a = random_tensor(rng, {2, 4, 5, 5});
    Tensor<double> b = random_tensor(rng, {2, 4, 5, 5});
    Tensor<double> label = random_tensor(rng, {2, 4, 5, 5});
    run("add", {{"a", a}, {"b", b}},
        [=]() { return mse_loss(add(a, b), label); });
  }
  {
    Tensor<double> pred = random_tensor(rng, {2, 3, 4, 4});
    Tensor<double> label = random_tensor(rng, {2, 3, 4, 4});
    run("mse_loss", {{"pred", pred}, {"label", label}},
        [=]() { return mse_loss(pred, label); });
  }
  {
    // chained ops, one shared input feeding two consumers
    Tensor<double> in = random_tensor(rng, {1, 2, 8, 8});
    Tensor<double> w1 = random_tensor(rng, {4, 2, 3, 3});
    Tensor<double> b1 = random_tensor(rng, {1, 4, 1, 1});
    Tensor<double> slope = random_tensor(rng, {1, 4, 1, 1}, 0.05, 0.5);
    Tensor<double> w2 = random_tensor(rng, {4, 2, 2, 2});
    Tensor<double> b2 = random_tensor(rng, {1, 2, 1, 1});
    Tensor<double> label = random_tensor(rng, {1, 2, 8, 8});
    run("composite chain",
        {{"input", in}, {"w1", w1}, {"b1", b1}, {"slope", slope}, {"w2", w2}, {"b2", b2}},
        [=]() {
          Tensor<double> t = prelu(conv2d(in, w1, b1, 1, 1), slope);
          t = maxpool2x2(t).values;
          t = transposed_conv2d(t, w2, b2, 2, 0);
          t = add(t, in);
          return mse_loss(t, label);
        });
  }
  return summary;
}

// Sampled finite-difference check through a full variant forward on a small
// input: a few coordinates of every parameter tensor plus both input planes.
inline GradCheckSummary run_model_gradient_check(
    const ModelConfig& cfg, std::uint64_t seed = 20240902,
    Index coords_per_tensor = 4) {
  using namespace gradcheck_detail;
  std::mt19937_64 rng(seed);
  GradCheckSummary summary;

  ModelWeights<double> weights = init_model<double>(cfg, seed ^ 0x9e3779b97f4a7c15ull);
  Tensor<double> recon = random_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);
  Tensor<double> aux;
  if (variant_is_dual(cfg.variant)) {
    aux = random_tensor(rng, {1, 1, 8, 8}, -1.0, 1.0);
  }
  Tensor<double> label = random_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);

  std::vector<Target> targets;
  targets.push_back({"input.recon", recon});
  if (aux.valid()) targets.push_back({"input.aux", aux});
  for (auto& p : weights.params()) targets.push_back({p.name, p.value});

  auto fwd = [&weights, recon, aux, label]() mutable {
    return mse_loss(model_forward(weights, recon, aux), label);
  };
  GradCheckReport r = check(std::string("model ") + variant_name(cfg.variant),
                            std::move(targets), fwd, coords_per_tensor, rng);
  summary.max_rel_err = r.max_rel_err;
  summary.reports.push_back(std::move(r));
  return summary;
}

inline GradCheckSummary run_gradient_checks(bool include_model = true,
                                            std::uint64_t seed = 20240901) {
  GradCheckSummary summary = run_op_gradient_checks(seed);
  if (include_model) {
    summary.merge(run_model_gradient_check(ModelConfig{}, seed + 1));
  }
  return summary;
}

}  // namespace rrnet
