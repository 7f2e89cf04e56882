#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <vector>

#include "repflow/toy/dataset.hpp"
#include "repflow/toy/model.hpp"
#include "repflow/toy/train.hpp"
#include "support/gradcheck.hpp"

using namespace repflow;
using namespace repflow::toy;
using repflow::testsupport::GradCheckStats;
using repflow::testsupport::central_diff;

namespace {

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool tensors_equal(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].dims != b[i].dims) return false;
    if (a[i].data.size() != b[i].data.size()) return false;
    if (std::memcmp(a[i].data.data(), b[i].data.data(), a[i].data.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

ToyDatasetConfig small_config() {
  ToyDatasetConfig cfg;
  cfg.num_classes = 3;
  cfg.samples_per_class = 2;
  cfg.frame_count = 4;
  cfg.height = 12;
  cfg.width = 12;
  return cfg;
}

}  // namespace

TEST_CASE("dataset: balanced labels, deterministic bits, exact shift motion") {
  ToyDatasetConfig cfg;
  cfg.num_classes = 4;
  cfg.samples_per_class = 2;
  const auto ds = gen_motion_dataset(cfg, 11);
  REQUIRE(ds.train.size() == 8);
  REQUIRE(ds.test.size() == 8);
  std::map<int, int> counts;
  for (const auto& s : ds.train) counts[s.label]++;
  for (int k = 0; k < 4; ++k) CHECK(counts[k] == 2);

  const auto ds2 = gen_motion_dataset(cfg, 11);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(ds.train[i].label == ds2.train[i].label);
    for (std::size_t t = 0; t < ds.train[i].frames.size(); ++t)
      CHECK(bitwise_equal(ds.train[i].frames[t], ds2.train[i].frames[t]));
  }

  // Train and test textures come from disjoint streams.
  CHECK(!bitwise_equal(ds.train[0].frames[0], ds.test[0].frames[0]));

  // Class 3 is +x motion: each frame is the previous one circularly shifted
  // right by the sample's integer speed.
  for (const auto& s : ds.train) {
    if (s.label != 3) continue;
    const auto& f0 = s.frames[0];
    const auto& f1 = s.frames[1];
    const int w = f0.width();
    int speed = -1;
    for (int cand = cfg.speed_min; cand <= cfg.speed_max; ++cand) {
      bool match = true;
      for (int y = 0; y < f0.height() && match; ++y)
        for (int x = 0; x < w && match; ++x)
          if (f1(0, y, x) != f0(0, y, (x - cand % w + w) % w)) match = false;
      if (match) speed = cand;
    }
    CHECK(speed >= cfg.speed_min);
  }
}

TEST_CASE("dataset: invalid configurations are rejected") {
  ToyDatasetConfig cfg;
  cfg.height = 7;
  CHECK_THROWS_AS(gen_motion_dataset(cfg, 1), std::invalid_argument);
  cfg = ToyDatasetConfig{};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(gen_motion_dataset(cfg, 1), std::invalid_argument);
  cfg = ToyDatasetConfig{};
  cfg.speed_max = 0;
  CHECK_THROWS_AS(gen_motion_dataset(cfg, 1), std::invalid_argument);
  cfg = ToyDatasetConfig{};
  cfg.frame_count = 1;
  CHECK_THROWS_AS(gen_motion_dataset(cfg, 1), std::invalid_argument);
}

TEST_CASE("global frame shuffle permutes the frame pool without losing frames") {
  auto ds = gen_motion_dataset(small_config(), 21);
  std::vector<double> sums_before, sums_after;
  for (const auto& s : ds.train)
    for (const auto& f : s.frames) {
      double acc = 0;
      for (std::size_t i = 0; i < f.size(); ++i) acc += f[i];
      sums_before.push_back(acc);
    }
  Rng rng(5);
  shuffle_frames_globally(ds.train, rng);
  bool moved = false;
  std::size_t idx = 0;
  for (const auto& s : ds.train)
    for (const auto& f : s.frames) {
      double acc = 0;
      for (std::size_t i = 0; i < f.size(); ++i) acc += f[i];
      sums_after.push_back(acc);
      if (acc != sums_before[idx]) moved = true;
      ++idx;
    }
  std::sort(sums_before.begin(), sums_before.end());
  std::sort(sums_after.begin(), sums_after.end());
  CHECK(sums_before == sums_after);
  CHECK(moved);
}

TEST_CASE("cross entropy closed forms and guards") {
  CHECK(cross_entropy({0.0, 1.0, 0.0}, 1) == 0.0);
  CHECK(cross_entropy({0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const double clipped = cross_entropy({0.0, 1.0}, 0);
  CHECK(std::isfinite(clipped));
  CHECK(clipped == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, -1), std::invalid_argument);
}

TEST_CASE("forward produces a probability vector in every mode") {
  const auto ds = gen_motion_dataset(small_config(), 31);
  for (ModelMode mode : {ModelMode::kFlow, ModelMode::kFcf, ModelMode::kAppearance}) {
    Rng rng(41);
    const TinyModel m = make_tiny_model(1, 3, 2, 3, mode, rng, 6);
    for (const auto& s : ds.train) {
      const SampleTape tape = tiny_forward(m, s.frames);
      double sum = 0;
      for (double p : tape.probs) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
      CHECK(tape.pairs.size() ==
            static_cast<std::size_t>(prediction_count(m, static_cast<int>(s.frames.size()))));
    }
  }
}

TEST_CASE("model gradients match finite differences in every mode") {
  auto cfg = small_config();
  cfg.height = 8;
  cfg.width = 8;
  cfg.frame_count = 3;
  const auto ds = gen_motion_dataset(cfg, 51);
  const auto& sample = ds.train[1];

  for (ModelMode mode : {ModelMode::kFlow, ModelMode::kFcf, ModelMode::kAppearance}) {
    Rng rng(61);
    TinyModel m = make_tiny_model(1, 3, 2, 2, mode, rng, 4);
    const auto loss_fn = [&] {
      return cross_entropy(tiny_forward(m, sample.frames).probs, sample.label);
    };
    const SampleTape tape = tiny_forward(m, sample.frames);
    const ModelGrads g = tiny_backward(m, sample.frames, tape, sample.label);

    GradCheckStats stats;
    Rng pick(71);
    for (int s = 0; s < 6; ++s) {
      const auto i = static_cast<std::size_t>(
          pick.uniform_int(0, static_cast<int>(m.conv_a.weights.size()) - 1));
      stats.record("conv_a.w", g.d_conv_a.weights[i],
                   central_diff(loss_fn, [&] { return m.conv_a.weights[i]; },
                                [&](double v) { m.conv_a.weights[i] = v; }));
      const auto j = static_cast<std::size_t>(
          pick.uniform_int(0, static_cast<int>(m.conv_b.weights.size()) - 1));
      stats.record("conv_b.w", g.d_conv_b.weights[j],
                   central_diff(loss_fn, [&] { return m.conv_b.weights[j]; },
                                [&](double v) { m.conv_b.weights[j] = v; }));
      const auto k = static_cast<std::size_t>(
          pick.uniform_int(0, static_cast<int>(m.fc_w.size()) - 1));
      stats.record("fc.w", g.d_fc_w[k],
                   central_diff(loss_fn, [&] { return m.fc_w[k]; },
                                [&](double v) { m.fc_w[k] = v; }));
    }
    for (std::size_t i = 0; i < m.fc_b.size(); ++i)
      stats.record("fc.b", g.d_fc_b[i],
                   central_diff(loss_fn, [&] { return m.fc_b[i]; },
                                [&](double v) { m.fc_b[i] = v; }));
    stats.record("conv_a.bias", g.d_conv_a.bias[0],
                 central_diff(loss_fn, [&] { return m.conv_a.bias[0]; },
                              [&](double v) { m.conv_a.bias[0] = v; }));

    if (mode != ModelMode::kAppearance) {
      stats.record("flow.theta", g.d_flow.d_flow.d_theta,
                   central_diff(loss_fn, [&] { return m.flow.flow.theta(); },
                                [&](double v) { m.flow.flow.set_theta(v); }));
      stats.record("flow.reduce.w", g.d_flow.d_reduce.weights[0],
                   central_diff(loss_fn, [&] { return m.flow.reduce.weights[0]; },
                                [&](double v) { m.flow.reduce.weights[0] = v; }));
      stats.record("flow.expand.w", g.d_flow.d_expand.weights[1],
                   central_diff(loss_fn, [&] { return m.flow.expand.weights[1]; },
                                [&](double v) { m.flow.expand.weights[1] = v; }));
    }
    if (mode == ModelMode::kFcf) {
      stats.record("mid.w", g.d_mid.weights[4],
                   central_diff(loss_fn, [&] { return m.mid.weights[4]; },
                                [&](double v) { m.mid.weights[4] = v; }));
      stats.record("flow_b.tau", g.d_flow_b.d_flow.d_tau,
                   central_diff(loss_fn, [&] { return m.flow_b.flow.tau(); },
                                [&](double v) { m.flow_b.flow.set_tau(v); }));
    }

    CAPTURE(static_cast<int>(mode));
    CAPTURE(stats.worst_leaf);
    CAPTURE(stats.worst_rel);
    CHECK(stats.failed == 0);
  }
}

TEST_CASE("evaluate is deterministic and confusion counts sum to the total") {
  const auto ds = gen_motion_dataset(small_config(), 81);
  Rng rng(91);
  const TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
  const EvalResult a = evaluate(m, ds.test);
  const EvalResult b = evaluate(m, ds.test, 4);
  CHECK(a.loss == b.loss);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.confusion == b.confusion);
  int total = 0;
  for (int v : a.confusion) total += v;
  CHECK(total == static_cast<int>(ds.test.size()));
  CHECK(a.accuracy >= 0.0);
  CHECK(a.accuracy <= 1.0);
}

TEST_CASE("training: zero epochs and zero learning rate change nothing") {
  const auto ds = gen_motion_dataset(small_config(), 101);
  Rng rng(111);
  TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
  const auto before = model_to_tensors(m);

  TrainConfig cfg;
  cfg.epochs = 0;
  auto history = train(m, ds.train, ds.test, cfg);
  CHECK(history.empty());
  CHECK(tensors_equal(model_to_tensors(m), before));

  cfg.epochs = 2;
  cfg.lr = 0.0;
  history = train(m, ds.train, ds.test, cfg);
  CHECK(history.size() == 2);
  CHECK(tensors_equal(model_to_tensors(m), before));
}

TEST_CASE("training: learn flags freeze flow parameters but not the network") {
  const auto ds = gen_motion_dataset(small_config(), 121);
  Rng rng(131);
  TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
  const auto flow_before = m.flow.flow;
  const auto conv_before = m.conv_a.weights;

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.05;
  cfg.learn = {false, false, false};
  train(m, ds.train, {}, cfg);

  CHECK(m.flow.flow.log_tau() == flow_before.log_tau());
  CHECK(m.flow.flow.log_lambda() == flow_before.log_lambda());
  CHECK(m.flow.flow.log_theta() == flow_before.log_theta());
  CHECK(m.flow.flow.w_x == flow_before.w_x);
  CHECK(m.flow.flow.sobel_x == flow_before.sobel_x);
  CHECK(m.conv_a.weights != conv_before);
}

TEST_CASE("training: gradients reach the flow leaves through stage B") {
  const auto ds = gen_motion_dataset(small_config(), 141);
  Rng rng(151);
  TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
  const auto flow_before = m.flow.flow;

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.05;
  train(m, ds.train, {}, cfg);

  const bool scalars_moved = m.flow.flow.log_tau() != flow_before.log_tau() ||
                             m.flow.flow.log_lambda() != flow_before.log_lambda() ||
                             m.flow.flow.log_theta() != flow_before.log_theta();
  const bool kernels_moved = !(m.flow.flow.w_x == flow_before.w_x) ||
                             !(m.flow.flow.sobel_x == flow_before.sobel_x);
  CHECK(scalars_moved);
  CHECK(kernels_moved);
}

TEST_CASE("training is bitwise reproducible across runs and thread counts") {
  const auto ds = gen_motion_dataset(small_config(), 161);
  auto run = [&](int threads) {
    Rng rng(171);
    TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 0.05;
    cfg.threads = threads;
    const auto history = train(m, ds.train, ds.test, cfg);
    return std::pair{model_to_tensors(m), history};
  };
  const auto [m1, h1] = run(1);
  const auto [m2, h2] = run(1);
  const auto [m4, h4] = run(4);
  CHECK(tensors_equal(m1, m2));
  CHECK(tensors_equal(m1, m4));
  REQUIRE(h1.size() == h4.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].train_loss == h4[i].train_loss);
    CHECK(h1[i].test_accuracy == h4[i].test_accuracy);
  }
}

TEST_CASE("training aborts with the step index when the loss blows up") {
  const auto ds = gen_motion_dataset(small_config(), 181);
  Rng rng(191);
  TinyModel m = make_tiny_model(1, 3, 2, 2, ModelMode::kFlow, rng, 6);
  m.fc_b[0] = std::nan("");

  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(m, ds.train, {}, cfg);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("model checkpoints round-trip bitwise in both flow modes") {
  const auto dir = std::filesystem::temp_directory_path();
  for (ModelMode mode : {ModelMode::kFlow, ModelMode::kFcf}) {
    Rng rng(201);
    const TinyModel m = make_tiny_model(1, 4, 2, 3, mode, rng, 6);
    const auto path = (dir / "repflow_toy_model.rfw").string();
    save_checkpoint(path, model_to_tensors(m));
    const TinyModel loaded = model_from_tensors(load_checkpoint(path));
    CHECK(tensors_equal(model_to_tensors(loaded), model_to_tensors(m)));
    CHECK(loaded.mode == m.mode);
    CHECK(loaded.num_classes == m.num_classes);
    std::filesystem::remove(path);
  }
}

TEST_CASE("ablation runners produce one row per cell") {
  const auto ds = gen_motion_dataset(small_config(), 211);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto flags = run_ablation(AblationAxis::kLearnFlags, ds, cfg, 2, 2);
  REQUIRE(flags.size() == 5);
  CHECK(flags[0].label == "none");
  CHECK(flags[4].label == "all");
  const auto iters = run_ablation(AblationAxis::kIterations, ds, cfg, 2, 2);
  REQUIRE(iters.size() == 4);
  CHECK(iters[0].label == "iterations_1");
  const auto fcf = run_ablation(AblationAxis::kFcf, ds, cfg, 2, 2);
  REQUIRE(fcf.size() == 2);
  CHECK(fcf[0].label == "flow");
  CHECK(fcf[1].label == "fcf");
}
