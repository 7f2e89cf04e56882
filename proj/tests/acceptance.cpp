// Acceptance gate: runs every shipping criterion end to end and prints one
// verdict line per criterion. Exit status is the number of failed criteria,
// so a red line fails the suite. The two training criteria dominate runtime.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "repflow/checkpoint.hpp"
#include "repflow/conv.hpp"
#include "repflow/feature_layer.hpp"
#include "repflow/flo.hpp"
#include "repflow/flow_layer.hpp"
#include "repflow/flow_params.hpp"
#include "repflow/rng.hpp"
#include "repflow/tensor.hpp"
#include "repflow/toy/dataset.hpp"
#include "repflow/toy/model.hpp"
#include "repflow/toy/train.hpp"
#include "repflow/tvl1.hpp"
#include "support/gradcheck.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace repflow;
using namespace repflow::testsupport;
using std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[768];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return std::string(buf);
}

double rel_err(double a, double b) {
  const double diff = std::abs(a - b);
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::abs(a), std::abs(b));
}

Tensor<double> random_frame(Rng& rng, int h, int w, double lo = 0.0, double hi = 255.0) {
  Tensor<double> t(1, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

int train_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hc, 1u, 8u));
}

// Layer forward with the wrapper's parameters held at the reference solver's
// defaults must agree with the reference solver to round-off, across the full
// iteration sweep.
Verdict oracle_equivalence() {
  Rng rng(101);
  const int sweeps[] = {1, 5, 10, 20, 50, 100};
  double worst = 0.0;
  for (int f = 0; f < 50; ++f) {
    const Tensor<double> f1 = random_frame(rng, 16, 16);
    const Tensor<double> f2 = random_frame(rng, 16, 16);
    const FlowParams<double> params;
    const TvParams<double> ref;
    for (int iters : sweeps) {
      const FlowField<double> a = rep_flow_forward(f1, f2, params, iters).flow;
      const FlowField<double> b = tvl1_flow(f1, f2, ref, iters);
      for (std::size_t i = 0; i < a.u_x.size(); ++i) {
        worst = std::max(worst, rel_err(a.u_x[i], b.u_x[i]));
        worst = std::max(worst, rel_err(a.u_y[i], b.u_y[i]));
      }
    }
  }
  Verdict v;
  v.pass = worst <= 1e-10;
  v.detail = fmt("max relative error %.3e across 50 fixtures x 6 iteration counts (limit 1e-10)",
                 worst);
  return v;
}

// Reverse-mode gradients for every learnable leaf against central finite
// differences: solver scalars and kernels through the flow layer, reduce and
// expand through the feature layer, and the mid conv through flow-of-flow.
Verdict gradient_suite() {
  GradCheckStats stats;
  const double h = 1e-6;
  for (int iters : {1, 5, 10}) {
    const std::string at = "@" + std::to_string(iters);
    Rng rng(200 + iters);

    {
      const Tensor<double> f1 = random_frame(rng, 16, 16);
      const Tensor<double> f2 = random_frame(rng, 16, 16);
      FlowField<double> up(16, 16);
      for (std::size_t i = 0; i < up.u_x.size(); ++i) {
        up.u_x[i] = rng.uniform(-1.0, 1.0);
        up.u_y[i] = rng.uniform(-1.0, 1.0);
      }
      const FlowParams<double> params;
      const auto base = rep_flow_forward(f1, f2, params, iters);
      const auto grads = rep_flow_backward(base.tape, up);
      const auto loss = [&](const FlowParams<double>& p) {
        const auto r = rep_flow_forward(f1, f2, p, iters);
        double acc = 0.0;
        for (std::size_t i = 0; i < up.u_x.size(); ++i)
          acc += up.u_x[i] * r.flow.u_x[i] + up.u_y[i] * r.flow.u_y[i];
        return acc;
      };
      const auto scalar = [&](const char* name, double analytic, double v0,
                              void (FlowParams<double>::*set)(double)) {
        FlowParams<double> p = params;
        (p.*set)(v0 + h);
        const double fp = loss(p);
        (p.*set)(v0 - h);
        const double fm = loss(p);
        stats.record(std::string(name) + at, analytic, (fp - fm) / (2.0 * h));
      };
      scalar("tau", grads.params.d_tau, params.tau(), &FlowParams<double>::set_tau);
      scalar("lambda", grads.params.d_lambda, params.lambda(), &FlowParams<double>::set_lambda);
      scalar("theta", grads.params.d_theta, params.theta(), &FlowParams<double>::set_theta);
      const auto kernel = [&](const char* name, const Kernel2D<double>& analytic,
                              Kernel2D<double> FlowParams<double>::*member) {
        FlowParams<double> p = params;
        Kernel2D<double>& k = p.*member;
        for (std::size_t i = 0; i < k.size(); ++i) {
          const double v0 = k[i];
          k[i] = v0 + h;
          const double fp = loss(p);
          k[i] = v0 - h;
          const double fm = loss(p);
          k[i] = v0;
          stats.record(fmt("%s[%zu]%s", name, i, at.c_str()), analytic[i],
                       (fp - fm) / (2.0 * h));
        }
      };
      kernel("w_x", grads.params.d_w_x, &FlowParams<double>::w_x);
      kernel("w_y", grads.params.d_w_y, &FlowParams<double>::w_y);
      kernel("sobel_x", grads.params.d_sobel_x, &FlowParams<double>::sobel_x);
      kernel("sobel_y", grads.params.d_sobel_y, &FlowParams<double>::sobel_y);
    }

    {
      const LayerWeights<double> weights = make_layer_weights<double>(1, 2, iters, rng);
      const Tensor<double> ft = random_frame(rng, 16, 16, -0.5, 0.5);
      const Tensor<double> ft1 = random_frame(rng, 16, 16, -0.5, 0.5);
      // Mean-scale projection: single-channel reduce gradients are exactly
      // zero (the per-channel normalization cancels any affine reweighting),
      // and at unit scale finite-difference cancellation noise would sit
      // above the zero-gradient floor.
      Tensor<double> proj(1, 16, 16);
      for (std::size_t i = 0; i < proj.size(); ++i)
        proj[i] = rng.uniform(-1.0, 1.0) / static_cast<double>(proj.size());
      const auto loss = [&](const LayerWeights<double>& w) {
        const auto r = layer_forward(ft, ft1, w);
        double acc = 0.0;
        for (std::size_t i = 0; i < r.value.size(); ++i) acc += proj[i] * r.value[i];
        return acc;
      };
      const auto base = layer_forward(ft, ft1, weights);
      const auto g = layer_backward(base.tape, proj);
      const auto conv_leaves = [&](const char* name, const std::vector<double>& d_weights,
                                   const std::vector<double>& d_bias,
                                   ConvLayer<double> LayerWeights<double>::*member) {
        LayerWeights<double> probe = weights;
        ConvLayer<double>& layer = probe.*member;
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          const double v0 = layer.weights[i];
          layer.weights[i] = v0 + h;
          const double fp = loss(probe);
          layer.weights[i] = v0 - h;
          const double fm = loss(probe);
          layer.weights[i] = v0;
          stats.record(fmt("%s.w[%zu]%s", name, i, at.c_str()), d_weights[i],
                       (fp - fm) / (2.0 * h));
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
          const double v0 = layer.bias[i];
          layer.bias[i] = v0 + h;
          const double fp = loss(probe);
          layer.bias[i] = v0 - h;
          const double fm = loss(probe);
          layer.bias[i] = v0;
          stats.record(fmt("%s.b[%zu]%s", name, i, at.c_str()), d_bias[i],
                       (fp - fm) / (2.0 * h));
        }
      };
      conv_leaves("reduce", g.d_reduce.weights, g.d_reduce.bias, &LayerWeights<double>::reduce);
      conv_leaves("expand", g.d_expand.weights, g.d_expand.bias, &LayerWeights<double>::expand);
    }

    {
      const LayerWeights<double> wa = make_layer_weights<double>(1, 1, iters, rng);
      const LayerWeights<double> wb = make_layer_weights<double>(1, 1, iters, rng);
      ConvLayer<double> mid = make_mid_conv<double>(1);
      for (auto& w : mid.weights) w += rng.uniform(-0.1, 0.1);
      for (auto& b : mid.bias) b += rng.uniform(-0.1, 0.1);
      const Tensor<double> f0 = random_frame(rng, 16, 16);
      const Tensor<double> f1 = random_frame(rng, 16, 16);
      const Tensor<double> f2 = random_frame(rng, 16, 16);
      // Mean scale again: the mid bias gradient is exactly zero through the
      // shift-invariant second-stage normalization.
      Tensor<double> proj(1, 16, 16);
      for (std::size_t i = 0; i < proj.size(); ++i)
        proj[i] = rng.uniform(-1.0, 1.0) / static_cast<double>(proj.size());
      const auto loss = [&](const ConvLayer<double>& m) {
        const auto r = flow_conv_flow(f0, f1, f2, wa, m, wb);
        double acc = 0.0;
        for (std::size_t i = 0; i < r.value.size(); ++i) acc += proj[i] * r.value[i];
        return acc;
      };
      const auto base = flow_conv_flow(f0, f1, f2, wa, mid, wb);
      const auto g = flow_conv_flow_backward(base.tape, proj);
      ConvLayer<double> probe = mid;
      for (std::size_t i = 0; i < probe.weights.size(); ++i) {
        const double v0 = probe.weights[i];
        probe.weights[i] = v0 + h;
        const double fp = loss(probe);
        probe.weights[i] = v0 - h;
        const double fm = loss(probe);
        probe.weights[i] = v0;
        stats.record(fmt("mid.w[%zu]%s", i, at.c_str()), g.d_mid.weights[i],
                     (fp - fm) / (2.0 * h));
      }
      for (std::size_t i = 0; i < probe.bias.size(); ++i) {
        const double v0 = probe.bias[i];
        probe.bias[i] = v0 + h;
        const double fp = loss(probe);
        probe.bias[i] = v0 - h;
        const double fm = loss(probe);
        probe.bias[i] = v0;
        stats.record(fmt("mid.b[%zu]%s", i, at.c_str()), g.d_mid.bias[i],
                     (fp - fm) / (2.0 * h));
      }
    }
  }
  Verdict v;
  v.pass = stats.failed == 0;
  v.detail = fmt("%d leaf entries across iterations {1,5,10}, %d failed, worst rel %.3e (%s)",
                 stats.checked, stats.failed, stats.worst_rel, stats.worst_leaf.c_str());
  return v;
}

// Identical frames must map to exactly zero flow whatever the parameters:
// the residual starts at zero, so every update leaves the field untouched.
Verdict zero_motion() {
  Rng rng(303);
  int bad = 0;
  double max_abs = 0.0;
  for (int k = 0; k < 100; ++k) {
    FlowParams<double> p;
    p.set_tau(std::exp(rng.uniform(std::log(0.01), std::log(1.0))));
    p.set_lambda(std::exp(rng.uniform(std::log(0.01), std::log(2.0))));
    p.set_theta(std::exp(rng.uniform(std::log(0.05), std::log(1.0))));
    for (std::size_t i = 0; i < p.w_x.size(); ++i) p.w_x[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < p.w_y.size(); ++i) p.w_y[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < p.sobel_x.size(); ++i) p.sobel_x[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < p.sobel_y.size(); ++i) p.sobel_y[i] = rng.uniform(-1.0, 1.0);
    const int iters = rng.uniform_int(1, 20);
    const Tensor<double> f = random_frame(rng, 16, 16);
    const FlowField<double> flow = rep_flow_forward(f, f, p, iters).flow;
    bool zero = true;
    for (std::size_t i = 0; i < flow.u_x.size(); ++i) {
      max_abs = std::max({max_abs, std::abs(flow.u_x[i]), std::abs(flow.u_y[i])});
      if (flow.u_x[i] != 0.0 || flow.u_y[i] != 0.0) zero = false;
    }
    if (!zero) ++bad;
  }
  Verdict v;
  v.pass = bad == 0;
  v.detail = fmt("%d/100 randomized parameter settings give exactly zero flow (max |u| = %g)",
                 100 - bad, max_abs);
  return v;
}

// One-pixel shifts: the hundred-iteration solution must report the shift in
// the interior, and truncating the iteration budget must not move the
// estimate further from the hundred-iteration solution as the budget grows.
Verdict translation_recovery() {
  const auto corpus = shift_corpus();
  const TvParams<double> params;
  double ux_lo = 1e18, ux_hi = -1e18, uy_signed = 0.0, uy_abs = 0.0;
  bool means_ok = true;
  int monotone = 0;
  std::string example;
  const int sweeps[] = {1, 5, 10, 20, 50};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& fix = corpus[i];
    const FlowField<double> ref = tvl1_flow(fix.f1, fix.f2, params, 100);
    const double mux = interior_mean(ref.u_x);
    const double muy = interior_mean(ref.u_y);
    const double may = interior_mean_abs(ref.u_y);
    ux_lo = std::min(ux_lo, mux);
    ux_hi = std::max(ux_hi, mux);
    uy_signed = std::max(uy_signed, std::abs(muy));
    uy_abs = std::max(uy_abs, may);
    if (mux < 0.5 || mux > 1.5 || std::abs(muy) >= 0.3) means_ok = false;

    double epe[5];
    bool mono = true;
    for (int j = 0; j < 5; ++j) {
      const FlowField<double> part = tvl1_flow(fix.f1, fix.f2, params, sweeps[j]);
      epe[j] = mean_endpoint_error(part, ref);
      if (j > 0 && epe[j] > epe[j - 1]) mono = false;
    }
    if (mono) ++monotone;
    else if (example.empty())
      example = fmt("texture %zu: %.3f %.3f %.3f %.3f %.3f", i, epe[0], epe[1], epe[2], epe[3],
                    epe[4]);
  }
  Verdict v;
  v.pass = means_ok && monotone == static_cast<int>(corpus.size());
  v.detail = fmt("interior mean u_x in [%.3f, %.3f], |mean u_y| up to %.3f (mean |u_y| up to "
                 "%.3f); error vs 100-iteration solution non-increasing on %d/%zu textures%s%s",
                 ux_lo, ux_hi, uy_signed, uy_abs, monotone, corpus.size(),
                 example.empty() ? "" : "; e.g. ", example.c_str());
  return v;
}

// The hundred-iteration solution should not cost more than the zero field
// under the variational objective the solver nominally minimizes.
Verdict energy_decrease() {
  const auto corpus = shift_corpus();
  const TvParams<double> params;
  int ok = 0;
  double worst_ratio = 0.0;
  double worst_e0 = 0.0, worst_e100 = 0.0;
  for (const auto& fix : corpus) {
    const FlowField<double> zero(fix.f1.height(), fix.f1.width());
    const FlowField<double> u = tvl1_flow(fix.f1, fix.f2, params, 100);
    const double e0 = tv_energy(zero, fix.f1, fix.f2, params.lambda);
    const double e100 = tv_energy(u, fix.f1, fix.f2, params.lambda);
    if (e100 <= e0) {
      ++ok;
    } else if (e100 / e0 > worst_ratio) {
      worst_ratio = e100 / e0;
      worst_e0 = e0;
      worst_e100 = e100;
    }
  }
  Verdict v;
  v.pass = ok == static_cast<int>(corpus.size());
  if (v.pass)
    v.detail = fmt("E(u_100) <= E(0) on all %zu textures", corpus.size());
  else
    v.detail = fmt("E(u_100) <= E(0) on %d/%zu textures; worst violation E(0)=%.1f vs "
                   "E(u_100)=%.1f (ratio %.2f)",
                   ok, corpus.size(), worst_e0, worst_e100, worst_ratio);
  return v;
}

// Two-sided exact binomial acceptance region at the 1% level around chance.
void binomial_region(int n, double p, int& k_lo, int& k_hi) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k)
    pmf[static_cast<std::size_t>(k)] =
        std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                 k * std::log(p) + (n - k) * std::log1p(-p));
  k_lo = 0;
  k_hi = n;
  double lower = 0.0;
  for (int k = 0; k <= n; ++k) {
    lower += pmf[static_cast<std::size_t>(k)];
    if (lower > 0.005) {
      k_lo = k;
      break;
    }
  }
  double upper = 0.0;
  for (int k = n; k >= 0; --k) {
    upper += pmf[static_cast<std::size_t>(k)];
    if (upper > 0.005) {
      k_hi = k;
      break;
    }
  }
}

// The default recipe must solve the 4-class motion task, and the same recipe
// with the motion representation replaced by appearance must stay at chance.
Verdict toy_learning() {
  const toy::ToyDatasetConfig dcfg;
  const toy::ToyDataset ds = toy::gen_motion_dataset(dcfg, 7);
  toy::TrainConfig cfg;
  cfg.threads = train_threads();

  std::fprintf(stderr, "  [toy learning] training flow model, %d epochs...\n", cfg.epochs);
  Rng rng_flow(cfg.seed);
  toy::TinyModel flow_model =
      toy::make_tiny_model(1, dcfg.num_classes, 8, 10, toy::ModelMode::kFlow, rng_flow);
  const auto flow_hist = toy::train(flow_model, ds.train, ds.test, cfg);
  int reached = -1;
  double reached_acc = 0.0;
  for (const auto& r : flow_hist)
    if (r.test_accuracy >= 0.90) {
      reached = r.epoch;
      reached_acc = r.test_accuracy;
      break;
    }
  const double flow_final = flow_hist.back().test_accuracy;

  std::fprintf(stderr, "  [toy learning] training appearance control, %d epochs...\n",
               cfg.epochs);
  Rng rng_app(cfg.seed);
  toy::TinyModel app_model =
      toy::make_tiny_model(1, dcfg.num_classes, 8, 10, toy::ModelMode::kAppearance, rng_app);
  const auto app_hist = toy::train(app_model, ds.train, ds.test, cfg);
  const double app_final = app_hist.back().test_accuracy;

  const int n = static_cast<int>(ds.test.size());
  const int correct = static_cast<int>(std::llround(app_final * n));
  int k_lo = 0, k_hi = n;
  binomial_region(n, 1.0 / dcfg.num_classes, k_lo, k_hi);
  const bool at_chance = correct >= k_lo && correct <= k_hi;

  Verdict v;
  v.pass = reached >= 0 && at_chance;
  v.detail = fmt("flow test accuracy %.3f (>=0.90 from epoch %d, final %.3f); appearance final "
                 "%.3f = %d/%d, 99%% chance region [%d, %d] -> %s",
                 reached >= 0 ? reached_acc : flow_final, reached, flow_final, app_final,
                 correct, n, k_lo, k_hi, at_chance ? "at chance" : "OFF chance");
  return v;
}

// At a deliberately small iteration budget, unlocking the divergence kernels
// and the solver scalars must do at least as well as keeping everything
// fixed.
Verdict learned_params_help() {
  const toy::ToyDatasetConfig dcfg;
  const toy::ToyDataset ds = toy::gen_motion_dataset(dcfg, 7);
  const auto run = [&](LearnFlags learn, const char* label) {
    toy::TrainConfig cfg;
    cfg.threads = train_threads();
    cfg.learn = learn;
    std::fprintf(stderr, "  [learned params] training %s, %d epochs at 5 iterations...\n", label,
                 cfg.epochs);
    Rng rng(cfg.seed);
    toy::TinyModel m = toy::make_tiny_model(1, dcfg.num_classes, 8, 5, toy::ModelMode::kFlow, rng);
    const auto hist = toy::train(m, ds.train, ds.test, cfg);
    return hist.back().test_accuracy;
  };
  const double learned = run(LearnFlags{false, true, true}, "learned divergence+scalars");
  const double fixed = run(LearnFlags{false, false, false}, "all-fixed");
  Verdict v;
  v.pass = learned >= fixed;
  v.detail = fmt("final test accuracy: learned divergence+scalars %.3f vs all-fixed %.3f at 5 "
                 "iterations",
                 learned, fixed);
  return v;
}

// Constant-velocity triples: the first stage sees the translation, and the
// stacked second stage is supposed to report a near-zero change of flow.
// Also re-checks the mid-conv and stage scalars against finite differences
// on a triple of random frames.
Verdict flow_of_flow_sanity() {
  Rng rng(2108);
  const LayerWeights<double> wa = make_layer_weights<double>(1, 2, 10, rng);
  const LayerWeights<double> wb = make_layer_weights<double>(1, 2, 10, rng);
  const ConvLayer<double> mid = make_mid_conv<double>(1);

  double worst_b = 0.0;
  double min_dominant = 1e18;
  for (int s = 0; s < 5; ++s) {
    const auto tex = toy::random_texture(rng, 32, 32);
    const auto res =
        flow_conv_flow(tex.render(0, 0), tex.render(1, 0), tex.render(2, 0), wa, mid, wb);
    double dominant = 0.0;
    for (int c = 0; c < res.tape.a1.stack.channels(); ++c)
      dominant =
          std::max(dominant, std::abs(interior_mean(res.tape.a1.stack.slice_channel(c))));
    min_dominant = std::min(min_dominant, dominant);
    for (int c = 0; c < res.tape.b.stack.channels() / 2; ++c) {
      const double bx = interior_mean(res.tape.b.stack.slice_channel(2 * c));
      const double by = interior_mean(res.tape.b.stack.slice_channel(2 * c + 1));
      worst_b = std::max(worst_b, std::hypot(bx, by));
    }
  }

  GradCheckStats stats;
  {
    const double h = 1e-6;
    Rng grng(2110);
    const LayerWeights<double> ga = make_layer_weights<double>(1, 1, 5, grng);
    LayerWeights<double> gb = make_layer_weights<double>(1, 1, 5, grng);
    ConvLayer<double> gmid = make_mid_conv<double>(1);
    for (auto& w : gmid.weights) w += grng.uniform(-0.1, 0.1);
    const Tensor<double> f0 = random_frame(grng, 16, 16);
    const Tensor<double> f1 = random_frame(grng, 16, 16);
    const Tensor<double> f2 = random_frame(grng, 16, 16);
    Tensor<double> proj(1, 16, 16);
    for (std::size_t i = 0; i < proj.size(); ++i)
      proj[i] = grng.uniform(-1.0, 1.0) / static_cast<double>(proj.size());
    const auto loss = [&](const ConvLayer<double>& m, const LayerWeights<double>& b) {
      const auto r = flow_conv_flow(f0, f1, f2, ga, m, b);
      double acc = 0.0;
      for (std::size_t i = 0; i < r.value.size(); ++i) acc += proj[i] * r.value[i];
      return acc;
    };
    const auto base = flow_conv_flow(f0, f1, f2, ga, gmid, gb);
    const auto g = flow_conv_flow_backward(base.tape, proj);
    ConvLayer<double> probe = gmid;
    for (std::size_t i = 0; i < probe.weights.size(); ++i) {
      const double v0 = probe.weights[i];
      probe.weights[i] = v0 + h;
      const double fp = loss(probe, gb);
      probe.weights[i] = v0 - h;
      const double fm = loss(probe, gb);
      probe.weights[i] = v0;
      stats.record(fmt("mid.w[%zu]", i), g.d_mid.weights[i], (fp - fm) / (2.0 * h));
    }
    stats.record("b.theta", g.d_stage_b.d_flow.d_theta,
                 central_diff([&] { return loss(gmid, gb); },
                              [&] { return gb.flow.theta(); },
                              [&](double x) { gb.flow.set_theta(x); }, h));
    stats.record("b.tau", g.d_stage_b.d_flow.d_tau,
                 central_diff([&] { return loss(gmid, gb); }, [&] { return gb.flow.tau(); },
                              [&](double x) { gb.flow.set_tau(x); }, h));
  }

  Verdict v;
  const bool meaningful = min_dominant > 0.3;
  v.pass = meaningful && worst_b < 0.2 && stats.failed == 0;
  v.detail = fmt("second-stage mean flow magnitude up to %.3f across 5 sequences (limit 0.2; "
                 "first-stage translation confirmed, dominant mean >= %.3f); gradients %d/%d ok, "
                 "worst rel %.3e",
                 worst_b, min_dominant, stats.checked - stats.failed, stats.checked,
                 stats.worst_rel);
  return v;
}

// Per-iteration cost dominates, so a 10x iteration budget should cost close
// to 10x the wall time. Absolute numbers go to the docs.
Verdict benchmark_linearity() {
  Rng rng(99);
  LayerWeights<double> w10 = make_layer_weights<double>(4, 4, 10, rng);
  LayerWeights<double> w100 = w10;
  w100.iterations = 100;
  Tensor<double> ft(4, 32, 32), ft1(4, 32, 32);
  for (std::size_t i = 0; i < ft.size(); ++i) ft[i] = rng.uniform(0.0, 255.0);
  for (std::size_t i = 0; i < ft1.size(); ++i) ft1[i] = rng.uniform(0.0, 255.0);

  volatile double sink = 0.0;
  const auto median_ms = [&](const LayerWeights<double>& w) {
    for (int i = 0; i < 2; ++i) sink = sink + layer_forward(ft, ft1, w).value[0];
    std::vector<double> ms;
    for (int i = 0; i < 12; ++i) {
      const auto t0 = steady_clock::now();
      sink = sink + layer_forward(ft, ft1, w).value[0];
      const auto t1 = steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    return 0.5 * (ms[5] + ms[6]);
  };
  const double m10 = median_ms(w10);
  const double m100 = median_ms(w100);
  const double ratio = m100 / m10;

  Verdict v;
  v.pass = ratio >= 6.0 && ratio <= 14.0;
  v.detail = fmt("median %.2f ms at 10 iterations, %.2f ms at 100 (32x32, 4 channels, 1 thread); "
                 "ratio %.2f (limits [6, 14]); %.0f frame pairs/s at 10 iterations",
                 m10, m100, ratio, 1000.0 / m10);
  return v;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool tensors_bitwise_equal(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].dims != b[i].dims ||
        a[i].data.size() != b[i].data.size())
      return false;
    if (!a[i].data.empty() &&
        std::memcmp(a[i].data.data(), b[i].data.data(), a[i].data.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

// Checkpoints load back bit for bit and resave byte for byte; flow files
// survive write/read/write without a byte changing.
Verdict round_trips() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "repflow_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  Rng rng(77);
  toy::TinyModel model = toy::make_tiny_model(1, 4, 4, 5, toy::ModelMode::kFcf, rng);
  const auto tensors = toy::model_to_tensors(model);
  const fs::path ck_a = dir / "model_a.rfw";
  const fs::path ck_b = dir / "model_b.rfw";
  save_checkpoint(ck_a.string(), tensors);
  const auto loaded = load_checkpoint(ck_a.string());
  const bool ck_bits = tensors_bitwise_equal(tensors, loaded);
  save_checkpoint(ck_b.string(), loaded);
  const bool ck_bytes = read_bytes(ck_a) == read_bytes(ck_b);

  FloData flo;
  flo.width = 9;
  flo.height = 7;
  flo.uv.resize(2u * 9u * 7u);
  for (auto& x : flo.uv) x = static_cast<float>(rng.uniform(-10.0, 10.0));
  const fs::path flo_a = dir / "a.flo";
  const fs::path flo_b = dir / "b.flo";
  write_flo(flo_a.string(), flo);
  const FloData back = read_flo(flo_a.string());
  const bool flo_bits = back.width == flo.width && back.height == flo.height &&
                        back.uv.size() == flo.uv.size() &&
                        std::memcmp(back.uv.data(), flo.uv.data(),
                                    flo.uv.size() * sizeof(float)) == 0;
  write_flo(flo_b.string(), back);
  const bool flo_bytes = read_bytes(flo_a) == read_bytes(flo_b);

  fs::remove_all(dir);

  Verdict v;
  v.pass = ck_bits && ck_bytes && flo_bits && flo_bytes;
  v.detail = fmt("checkpoint: %zu tensors load bit-exact %s, resave byte-identical %s; flow "
                 "file: read bit-exact %s, rewrite byte-identical %s",
                 tensors.size(), ck_bits ? "yes" : "NO", ck_bytes ? "yes" : "NO",
                 flo_bits ? "yes" : "NO", flo_bytes ? "yes" : "NO");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"gradient suite", gradient_suite},
      {"zero-motion fixed point", zero_motion},
      {"translation recovery", translation_recovery},
      {"energy decrease", energy_decrease},
      {"toy learning", toy_learning},
      {"learned parameters help", learned_params_help},
      {"flow-of-flow sanity", flow_of_flow_sanity},
      {"benchmark linearity", benchmark_linearity},
      {"round-trips", round_trips},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = steady_clock::now();
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(steady_clock::now() - t0).count();
    std::printf("[%s] %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures),
              criteria.size());
  return failures;
}
