#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "repflow/errors.hpp"
#include "repflow/optim.hpp"
#include "repflow/parallel.hpp"
#include "repflow/pnm.hpp"
#include "repflow/rng.hpp"
#include "repflow/toy/dataset.hpp"
#include "repflow/toy/model.hpp"

namespace repflow::toy {

struct TrainConfig {
  double lr = 0.02;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 8;
  LearnFlags learn{true, true, true};
  std::uint64_t seed = 7;
  int threads = 1;

  void validate() const {
    if (lr < 0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_accuracy = 0;
  double test_loss = 0, test_accuracy = 0;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> confusion;  // num_classes x num_classes, [truth][predicted]
};

struct ModelOptState {
  ConvOptState<double> conv_a, mid, conv_b;
  LayerOptState<double> flow, flow_b;
  std::vector<double> fc_w, fc_b;

  explicit ModelOptState(const TinyModel& m)
      : conv_a(m.conv_a),
        mid(m.mid),
        conv_b(m.conv_b),
        flow(m.flow),
        flow_b(m.flow_b),
        fc_w(m.fc_w.size(), 0.0),
        fc_b(m.fc_b.size(), 0.0) {}
};

namespace detail {

inline void step_vector(std::vector<double>& w, const std::vector<double>& g, double lr,
                        double momentum, std::vector<double>& buf, const char* leaf) {
  for (double v : g) repflow::detail::check_grad_finite(v, leaf);
  for (std::size_t i = 0; i < w.size(); ++i) {
    buf[i] = momentum * buf[i] + g[i];
    w[i] -= lr * buf[i];
  }
}

}  // namespace detail

inline void step_model(TinyModel& m, const ModelGrads& g, double lr, ModelOptState& st,
                       double momentum = 0.9) {
  step_conv_layer(m.conv_a, g.d_conv_a, lr, st.conv_a, "conv_a", momentum);
  step_layer_weights(m.flow, g.d_flow, lr, st.flow, momentum);
  if (m.mode == ModelMode::kFcf) {
    step_conv_layer(m.mid, g.d_mid, lr, st.mid, "mid", momentum);
    step_layer_weights(m.flow_b, g.d_flow_b, lr, st.flow_b, momentum);
  }
  step_conv_layer(m.conv_b, g.d_conv_b, lr, st.conv_b, "conv_b", momentum);
  detail::step_vector(m.fc_w, g.d_fc_w, lr, momentum, st.fc_w, "fc_w");
  detail::step_vector(m.fc_b, g.d_fc_b, lr, momentum, st.fc_b, "fc_b");
}

inline EvalResult evaluate(const TinyModel& m, const std::vector<VideoSample>& data,
                           int threads = 1) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t n = data.size();
  std::vector<double> losses(n);
  std::vector<int> predicted(n);
  parallel_for_index(n, threads, [&](std::size_t i) {
    const SampleTape tape = tiny_forward(m, data[i].frames);
    losses[i] = cross_entropy(tape.probs, data[i].label);
    predicted[i] = static_cast<int>(
        std::max_element(tape.probs.begin(), tape.probs.end()) - tape.probs.begin());
  });
  EvalResult res;
  res.confusion.assign(static_cast<std::size_t>(m.num_classes) * m.num_classes, 0);
  int correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    res.loss += losses[i];
    if (predicted[i] == data[i].label) ++correct;
    res.confusion[static_cast<std::size_t>(data[i].label) * m.num_classes + predicted[i]] += 1;
  }
  res.loss /= static_cast<double>(n);
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

// One optimizer step per batch on the mean loss. Per-sample work may run on
// worker threads; gradients are reduced in sample order, so the result is
// bitwise identical for any thread count. Aborts with the step index if the
// loss turns non-finite.
inline std::vector<EpochRecord> train(TinyModel& m, const std::vector<VideoSample>& train_data,
                                      const std::vector<VideoSample>& test_data,
                                      const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty dataset");
  m.flow.flow.learn = cfg.learn;
  m.flow_b.flow.learn = cfg.learn;

  ModelOptState opt(m);
  Rng order_rng = Rng(cfg.seed).fork(3);
  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochRecord> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    int epoch_correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::vector<ModelGrads> grads(count);
      std::vector<double> losses(count);
      std::vector<char> correct(count, 0);
      const double scale = 1.0 / static_cast<double>(count);

      parallel_for_index(count, cfg.threads, [&](std::size_t k) {
        const VideoSample& s = train_data[order[start + k]];
        const SampleTape tape = tiny_forward(m, s.frames);
        losses[k] = cross_entropy(tape.probs, s.label);
        const int pred = static_cast<int>(
            std::max_element(tape.probs.begin(), tape.probs.end()) - tape.probs.begin());
        correct[k] = pred == s.label ? 1 : 0;
        grads[k] = tiny_backward(m, s.frames, tape, s.label, scale);
      });

      double batch_loss = 0;
      for (std::size_t k = 0; k < count; ++k) {
        batch_loss += losses[k] * scale;
        epoch_correct += correct[k];
      }
      epoch_loss += batch_loss * static_cast<double>(count);
      ++step;
      if (!std::isfinite(batch_loss))
        throw NumericalError("train: non-finite loss at step " + std::to_string(step));

      ModelGrads batch_grads(m);
      for (std::size_t k = 0; k < count; ++k) batch_grads.accumulate(grads[k]);
      if (cfg.lr > 0) step_model(m, batch_grads, cfg.lr, opt, cfg.momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(train_data.size());
    rec.train_accuracy =
        static_cast<double>(epoch_correct) / static_cast<double>(train_data.size());
    if (!test_data.empty()) {
      const EvalResult ev = evaluate(m, test_data, cfg.threads);
      rec.test_loss = ev.loss;
      rec.test_accuracy = ev.accuracy;
    }
    history.push_back(rec);
  }
  return history;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "epoch,split,loss,accuracy\n";
  for (const auto& r : history) {
    out << r.epoch << ",train," << r.train_loss << ',' << r.train_accuracy << '\n';
    out << r.epoch << ",test," << r.test_loss << ',' << r.test_accuracy << '\n';
  }
  return out.str();
}

inline void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  const std::string csv = history_csv(history);
  write_file_atomic(path, csv.data(), csv.size());
}

enum class AblationAxis { kLearnFlags, kIterations, kFcf };

struct AblationRow {
  std::string label;
  double final_train_accuracy = 0;
  double final_test_accuracy = 0;
};

inline int count_classes(const std::vector<VideoSample>& samples) {
  int mx = 0;
  for (const auto& s : samples) mx = std::max(mx, s.label);
  return mx + 1;
}

// One training run per cell from a shared seed; reports the last epoch.
inline std::vector<AblationRow> run_ablation(AblationAxis axis, const ToyDataset& data,
                                             const TrainConfig& base, int c_prime,
                                             int iterations) {
  struct Cell {
    std::string label;
    LearnFlags learn;
    int iterations;
    ModelMode mode;
  };
  std::vector<Cell> cells;
  const LearnFlags all{true, true, true};
  switch (axis) {
    case AblationAxis::kLearnFlags:
      cells = {{"none", {false, false, false}, iterations, ModelMode::kFlow},
               {"scalars", {false, false, true}, iterations, ModelMode::kFlow},
               {"divergence", {false, true, false}, iterations, ModelMode::kFlow},
               {"sobel", {true, false, false}, iterations, ModelMode::kFlow},
               {"all", all, iterations, ModelMode::kFlow}};
      break;
    case AblationAxis::kIterations:
      for (int it : {1, 5, 10, 20})
        cells.push_back({"iterations_" + std::to_string(it), base.learn, it, ModelMode::kFlow});
      break;
    case AblationAxis::kFcf:
      cells = {{"flow", base.learn, iterations, ModelMode::kFlow},
               {"fcf", base.learn, iterations, ModelMode::kFcf}};
      break;
  }

  std::vector<AblationRow> rows;
  rows.reserve(cells.size());
  const int in_channels = data.train.at(0).frames.at(0).channels();
  for (const auto& cell : cells) {
    Rng rng(base.seed);
    TinyModel model = make_tiny_model(in_channels, static_cast<int>(count_classes(data.train)),
                                      c_prime, cell.iterations, cell.mode, rng);
    TrainConfig cfg = base;
    cfg.learn = cell.learn;
    const auto history = train(model, data.train, data.test, cfg);
    AblationRow row;
    row.label = cell.label;
    if (!history.empty()) {
      row.final_train_accuracy = history.back().train_accuracy;
      row.final_test_accuracy = history.back().test_accuracy;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace repflow::toy
