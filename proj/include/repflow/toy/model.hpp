#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "repflow/checkpoint.hpp"
#include "repflow/errors.hpp"
#include "repflow/feature_layer.hpp"
#include "repflow/rng.hpp"
#include "repflow/tensor.hpp"
#include "repflow/toy/dataset.hpp"

namespace repflow::toy {

enum class ModelMode : int {
  kFlow = 0,        // one flow layer per consecutive frame pair
  kFcf = 1,         // flow of mid-convolved flow per frame triple
  kAppearance = 2,  // flow layer replaced by identity on the earlier frame
};

// Frame classifier: shared appearance conv -> motion representation ->
// conv -> global average pool -> linear -> softmax, probabilities averaged
// over the per-pair predictions.
struct TinyModel {
  ConvLayer<double> conv_a;
  LayerWeights<double> flow;
  ConvLayer<double> mid;           // kFcf only
  LayerWeights<double> flow_b;     // kFcf only
  ConvLayer<double> conv_b;
  std::vector<double> fc_w;        // num_classes x feature_channels
  std::vector<double> fc_b;        // num_classes
  int num_classes = 4;
  ModelMode mode = ModelMode::kFlow;

  int in_channels() const { return conv_a.in_channels; }
  int feature_channels() const { return conv_a.out_channels; }

  void validate() const {
    const int f = feature_channels();
    if (num_classes < 2) throw std::invalid_argument("TinyModel: num_classes must be >= 2");
    if (conv_b.in_channels != f || conv_b.out_channels != f)
      throw std::invalid_argument("TinyModel: conv_b must map feature channels onto themselves");
    if (fc_w.size() != static_cast<std::size_t>(num_classes) * f ||
        fc_b.size() != static_cast<std::size_t>(num_classes))
      throw std::invalid_argument("TinyModel: classifier shape mismatch");
    if (mode != ModelMode::kAppearance) flow.validate();
    if (mode == ModelMode::kFcf) {
      flow_b.validate();
      if (mid.in_channels != f || mid.out_channels != f)
        throw std::invalid_argument("TinyModel: mid must map feature channels onto themselves");
    }
  }
};

namespace detail {

inline void init_conv(ConvLayer<double>& layer, Rng& rng) {
  const double bound =
      1.0 / std::sqrt(static_cast<double>(layer.in_channels) * layer.kernel_h * layer.kernel_w);
  for (auto& w : layer.weights) w = rng.uniform(-bound, bound);
  for (auto& b : layer.bias) b = 0.0;
}

}  // namespace detail

inline TinyModel make_tiny_model(int in_channels, int num_classes, int c_prime, int iterations,
                                 ModelMode mode, Rng& rng, int feature_channels = 16) {
  TinyModel m;
  m.num_classes = num_classes;
  m.mode = mode;
  m.conv_a = ConvLayer<double>(in_channels, feature_channels, 3, 3, PaddingSpec::replicate(1));
  detail::init_conv(m.conv_a, rng);
  m.flow = make_layer_weights<double>(feature_channels, c_prime, iterations, rng);
  m.mid = make_mid_conv<double>(feature_channels);
  m.flow_b = make_layer_weights<double>(feature_channels, c_prime, iterations, rng);
  m.conv_b = ConvLayer<double>(feature_channels, feature_channels, 3, 3, PaddingSpec::replicate(1));
  detail::init_conv(m.conv_b, rng);
  const double fc_bound = 1.0 / std::sqrt(static_cast<double>(feature_channels));
  m.fc_w.resize(static_cast<std::size_t>(num_classes) * feature_channels);
  for (auto& w : m.fc_w) w = rng.uniform(-fc_bound, fc_bound);
  m.fc_b.assign(static_cast<std::size_t>(num_classes), 0.0);
  m.validate();
  return m;
}

// L = -log max(p_label, 1e-12).
inline double cross_entropy(const std::vector<double>& probabilities, int label) {
  if (label < 0 || label >= static_cast<int>(probabilities.size()))
    throw std::invalid_argument("cross_entropy: label out of range");
  return -std::log(std::max(probabilities[static_cast<std::size_t>(label)], 1e-12));
}

namespace detail {

inline Tensor<double> relu(const Tensor<double>& x) {
  Tensor<double> out(x.channels(), x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

// Mask taken from the activation output: zero activations pass no gradient.
inline Tensor<double> relu_backward(const Tensor<double>& activated, const Tensor<double>& d) {
  Tensor<double> out(d.channels(), d.height(), d.width());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = activated[i] > 0.0 ? d[i] : 0.0;
  return out;
}

inline std::vector<double> global_avg_pool(const Tensor<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(x.channels()));
  const double inv = 1.0 / static_cast<double>(x.plane_size());
  for (int c = 0; c < x.channels(); ++c) {
    double acc = 0;
    const double* p = x.data() + static_cast<std::size_t>(c) * x.plane_size();
    for (std::size_t i = 0; i < x.plane_size(); ++i) acc += p[i];
    out[static_cast<std::size_t>(c)] = acc * inv;
  }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace detail

struct PairTape {
  LayerResult<double> flow_res;  // kFlow
  FcfResult<double> fcf_res;     // kFcf
  Tensor<double> rep;            // conv_b input
  Tensor<double> r_post;         // conv_b output after relu
  std::vector<double> pooled;
  std::vector<double> probs;
};

struct SampleTape {
  std::vector<Tensor<double>> a_post;  // per frame, after conv_a + relu
  std::vector<PairTape> pairs;
  std::vector<double> probs;  // averaged over pairs
};

inline int prediction_count(const TinyModel& m, int frame_count) {
  return m.mode == ModelMode::kFcf ? frame_count - 2 : frame_count - 1;
}

inline SampleTape tiny_forward(const TinyModel& m, const std::vector<Tensor<double>>& frames,
                               int threads = 1) {
  const int t_count = static_cast<int>(frames.size());
  const int pairs = prediction_count(m, t_count);
  if (pairs < 1) throw std::invalid_argument("tiny_forward: too few frames for this mode");

  SampleTape tape;
  tape.a_post.reserve(static_cast<std::size_t>(t_count));
  for (const auto& f : frames)
    tape.a_post.push_back(detail::relu(conv_layer_forward(m.conv_a, f)));

  tape.probs.assign(static_cast<std::size_t>(m.num_classes), 0.0);
  tape.pairs.resize(static_cast<std::size_t>(pairs));
  for (int t = 0; t < pairs; ++t) {
    PairTape& pt = tape.pairs[static_cast<std::size_t>(t)];
    switch (m.mode) {
      case ModelMode::kFlow:
        pt.flow_res = layer_forward(tape.a_post[t], tape.a_post[t + 1], m.flow, threads);
        pt.rep = pt.flow_res.value;
        break;
      case ModelMode::kFcf:
        pt.fcf_res = flow_conv_flow(tape.a_post[t], tape.a_post[t + 1], tape.a_post[t + 2],
                                    m.flow, m.mid, m.flow_b, threads);
        pt.rep = pt.fcf_res.value;
        break;
      case ModelMode::kAppearance:
        pt.rep = tape.a_post[t];
        break;
    }
    pt.r_post = detail::relu(conv_layer_forward(m.conv_b, pt.rep));
    pt.pooled = detail::global_avg_pool(pt.r_post);

    std::vector<double> logits(static_cast<std::size_t>(m.num_classes));
    const int f = m.feature_channels();
    for (int k = 0; k < m.num_classes; ++k) {
      double acc = m.fc_b[static_cast<std::size_t>(k)];
      for (int j = 0; j < f; ++j)
        acc += m.fc_w[static_cast<std::size_t>(k) * f + j] * pt.pooled[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(k)] = acc;
    }
    pt.probs = detail::softmax(logits);
    for (int k = 0; k < m.num_classes; ++k)
      tape.probs[static_cast<std::size_t>(k)] += pt.probs[static_cast<std::size_t>(k)];
  }
  const double inv_pairs = 1.0 / static_cast<double>(pairs);
  for (auto& v : tape.probs) v *= inv_pairs;
  return tape;
}

struct ModelGrads {
  ConvLayerGrads<double> d_conv_a;
  LayerGradients<double> d_flow;    // parameter fields only
  ConvLayerGrads<double> d_mid;
  LayerGradients<double> d_flow_b;  // parameter fields only
  ConvLayerGrads<double> d_conv_b;
  std::vector<double> d_fc_w;
  std::vector<double> d_fc_b;

  ModelGrads() = default;
  explicit ModelGrads(const TinyModel& m)
      : d_conv_a(m.conv_a),
        d_mid(m.mid),
        d_conv_b(m.conv_b),
        d_fc_w(m.fc_w.size(), 0.0),
        d_fc_b(m.fc_b.size(), 0.0) {
    d_flow.d_reduce = ConvLayerGrads<double>(m.flow.reduce);
    d_flow.d_expand = ConvLayerGrads<double>(m.flow.expand);
    d_flow_b.d_reduce = ConvLayerGrads<double>(m.flow_b.reduce);
    d_flow_b.d_expand = ConvLayerGrads<double>(m.flow_b.expand);
  }

  void accumulate(const ModelGrads& o) {
    d_conv_a.accumulate(o.d_conv_a);
    d_flow.accumulate_params(o.d_flow);
    d_mid.accumulate(o.d_mid);
    d_flow_b.accumulate_params(o.d_flow_b);
    d_conv_b.accumulate(o.d_conv_b);
    for (std::size_t i = 0; i < d_fc_w.size(); ++i) d_fc_w[i] += o.d_fc_w[i];
    for (std::size_t i = 0; i < d_fc_b.size(); ++i) d_fc_b[i] += o.d_fc_b[i];
  }
};

// Gradients of upstream_scale * cross_entropy(tape.probs, label) with respect
// to every trainable leaf. The clipping floor passes no gradient.
inline ModelGrads tiny_backward(const TinyModel& m, const std::vector<Tensor<double>>& frames,
                                const SampleTape& tape, int label, double upstream_scale = 1.0,
                                int threads = 1) {
  const int t_count = static_cast<int>(frames.size());
  const int pairs = static_cast<int>(tape.pairs.size());
  const int f = m.feature_channels();
  ModelGrads g(m);

  const double p_label = tape.probs[static_cast<std::size_t>(label)];
  const double d_avg = p_label > 1e-12 ? -upstream_scale / p_label : 0.0;
  if (d_avg == 0.0) return g;  // clipped or non-finite: zero upstream
  const double d_pair_prob = d_avg / static_cast<double>(pairs);

  std::vector<Tensor<double>> d_a(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t)
    d_a[static_cast<std::size_t>(t)] =
        Tensor<double>(f, frames[0].height(), frames[0].width());

  for (int t = 0; t < pairs; ++t) {
    const PairTape& pt = tape.pairs[static_cast<std::size_t>(t)];

    // Softmax backward for d(probs[label]) upstream on this pair.
    std::vector<double> d_logits(static_cast<std::size_t>(m.num_classes));
    const double pl = pt.probs[static_cast<std::size_t>(label)];
    for (int k = 0; k < m.num_classes; ++k) {
      const double pk = pt.probs[static_cast<std::size_t>(k)];
      const double indicator = k == label ? 1.0 : 0.0;
      d_logits[static_cast<std::size_t>(k)] = d_pair_prob * pl * (indicator - pk);
    }

    std::vector<double> d_pool(static_cast<std::size_t>(f), 0.0);
    for (int k = 0; k < m.num_classes; ++k) {
      const double dk = d_logits[static_cast<std::size_t>(k)];
      g.d_fc_b[static_cast<std::size_t>(k)] += dk;
      for (int j = 0; j < f; ++j) {
        g.d_fc_w[static_cast<std::size_t>(k) * f + j] += dk * pt.pooled[static_cast<std::size_t>(j)];
        d_pool[static_cast<std::size_t>(j)] += dk * m.fc_w[static_cast<std::size_t>(k) * f + j];
      }
    }

    Tensor<double> d_r(f, pt.r_post.height(), pt.r_post.width());
    const double inv_plane = 1.0 / static_cast<double>(pt.r_post.plane_size());
    for (int c = 0; c < f; ++c) {
      const double v = d_pool[static_cast<std::size_t>(c)] * inv_plane;
      double* p = d_r.data() + static_cast<std::size_t>(c) * d_r.plane_size();
      for (std::size_t i = 0; i < d_r.plane_size(); ++i) p[i] = v;
    }
    d_r = detail::relu_backward(pt.r_post, d_r);

    Tensor<double> d_rep;
    conv_layer_backward(m.conv_b, pt.rep, d_r, g.d_conv_b, &d_rep);

    switch (m.mode) {
      case ModelMode::kFlow: {
        LayerGradients<double> lg = layer_backward(pt.flow_res.tape, d_rep, threads);
        g.d_flow.accumulate_params(lg);
        d_a[static_cast<std::size_t>(t)] = add(d_a[static_cast<std::size_t>(t)], lg.d_ft);
        d_a[static_cast<std::size_t>(t) + 1] = add(d_a[static_cast<std::size_t>(t) + 1], lg.d_ft1);
        break;
      }
      case ModelMode::kFcf: {
        FcfGradients<double> fg = flow_conv_flow_backward(pt.fcf_res.tape, d_rep, threads);
        g.d_flow.accumulate_params(fg.d_stage_a);
        g.d_mid.accumulate(fg.d_mid);
        g.d_flow_b.accumulate_params(fg.d_stage_b);
        d_a[static_cast<std::size_t>(t)] = add(d_a[static_cast<std::size_t>(t)], fg.d_ft);
        d_a[static_cast<std::size_t>(t) + 1] = add(d_a[static_cast<std::size_t>(t) + 1], fg.d_ft1);
        d_a[static_cast<std::size_t>(t) + 2] = add(d_a[static_cast<std::size_t>(t) + 2], fg.d_ft2);
        break;
      }
      case ModelMode::kAppearance:
        d_a[static_cast<std::size_t>(t)] = add(d_a[static_cast<std::size_t>(t)], d_rep);
        break;
    }
  }

  for (int t = 0; t < t_count; ++t) {
    const Tensor<double> masked =
        detail::relu_backward(tape.a_post[static_cast<std::size_t>(t)],
                              d_a[static_cast<std::size_t>(t)]);
    conv_layer_backward<double>(m.conv_a, frames[static_cast<std::size_t>(t)], masked,
                                g.d_conv_a, nullptr);
  }
  return g;
}

inline std::vector<NamedTensor> model_to_tensors(const TinyModel& m) {
  std::vector<NamedTensor> ts;
  auto push_conv = [&](const std::string& prefix, const ConvLayer<double>& c) {
    ts.push_back(NamedTensor{prefix + ".weight",
                             {static_cast<std::uint64_t>(c.out_channels),
                              static_cast<std::uint64_t>(c.in_channels),
                              static_cast<std::uint64_t>(c.kernel_h),
                              static_cast<std::uint64_t>(c.kernel_w)},
                             c.weights});
    ts.push_back(
        NamedTensor{prefix + ".bias", {static_cast<std::uint64_t>(c.out_channels)}, c.bias});
  };
  ts.push_back(NamedTensor{"meta",
                           {4},
                           {static_cast<double>(m.num_classes), static_cast<double>(m.in_channels()),
                            static_cast<double>(m.feature_channels()),
                            static_cast<double>(static_cast<int>(m.mode))}});
  push_conv("conv_a", m.conv_a);
  for (auto& t : layer_weights_to_tensors(m.flow, "flow.")) ts.push_back(std::move(t));
  if (m.mode == ModelMode::kFcf) {
    push_conv("mid", m.mid);
    for (auto& t : layer_weights_to_tensors(m.flow_b, "flow_b.")) ts.push_back(std::move(t));
  }
  push_conv("conv_b", m.conv_b);
  ts.push_back(NamedTensor{"fc.weight",
                           {static_cast<std::uint64_t>(m.num_classes),
                            static_cast<std::uint64_t>(m.feature_channels())},
                           m.fc_w});
  ts.push_back(NamedTensor{"fc.bias", {static_cast<std::uint64_t>(m.num_classes)}, m.fc_b});
  return ts;
}

inline TinyModel model_from_tensors(const std::vector<NamedTensor>& ts) {
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const auto& t : ts)
      if (t.name == name) return t;
    throw IoError("checkpoint: missing tensor '" + name + "'");
  };
  const NamedTensor& meta = find("meta");
  if (meta.data.size() != 4) throw IoError("checkpoint: malformed meta tensor");
  TinyModel m;
  m.num_classes = static_cast<int>(meta.data[0]);
  const int in_channels = static_cast<int>(meta.data[1]);
  const int f = static_cast<int>(meta.data[2]);
  m.mode = static_cast<ModelMode>(static_cast<int>(meta.data[3]));

  auto load_conv = [&](const std::string& prefix, int out_c, int in_c, int kh, int kw,
                       PaddingSpec pad) {
    ConvLayer<double> c(in_c, out_c, kh, kw, pad);
    const NamedTensor& w = find(prefix + ".weight");
    const NamedTensor& b = find(prefix + ".bias");
    if (w.data.size() != c.weights.size() || b.data.size() != c.bias.size())
      throw IoError("checkpoint: tensor '" + prefix + "' has unexpected shape");
    c.weights = w.data;
    c.bias = b.data;
    return c;
  };
  m.conv_a = load_conv("conv_a", f, in_channels, 3, 3, PaddingSpec::replicate(1));
  m.flow = layer_weights_from_tensors<double>(ts, "flow.");
  if (m.mode == ModelMode::kFcf) {
    m.mid = load_conv("mid", f, f, 3, 3, PaddingSpec::replicate(1));
    m.flow_b = layer_weights_from_tensors<double>(ts, "flow_b.");
  } else {
    m.mid = make_mid_conv<double>(f);
    m.flow_b = m.flow;
  }
  m.conv_b = load_conv("conv_b", f, f, 3, 3, PaddingSpec::replicate(1));
  const NamedTensor& fw = find("fc.weight");
  const NamedTensor& fb = find("fc.bias");
  if (fw.data.size() != static_cast<std::size_t>(m.num_classes) * f ||
      fb.data.size() != static_cast<std::size_t>(m.num_classes))
    throw IoError("checkpoint: classifier tensors have unexpected shape");
  m.fc_w = fw.data;
  m.fc_b = fb.data;
  m.validate();
  return m;
}

}  // namespace repflow::toy
