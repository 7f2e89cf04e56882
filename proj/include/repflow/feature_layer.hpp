#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "repflow/checkpoint.hpp"
#include "repflow/conv.hpp"
#include "repflow/flow_layer.hpp"
#include "repflow/flow_params.hpp"
#include "repflow/parallel.hpp"
#include "repflow/rng.hpp"
#include "repflow/tensor.hpp"

namespace repflow {

// Weights of one flow layer over C-channel features: a shared 1x1 channel
// reduction to c_prime, the flow solver's parameters, and a 3x3 expansion
// from the stacked 2*c_prime flow channels back to C.
template <class T>
struct LayerWeights {
  ConvLayer<T> reduce;
  ConvLayer<T> expand;
  FlowParams<T> flow;
  int iterations = 10;
  int c_prime = 32;

  int channels() const { return reduce.in_channels; }

  void validate() const {
    if (iterations < 1) throw std::invalid_argument("LayerWeights: iterations must be >= 1");
    if (c_prime < 1) throw std::invalid_argument("LayerWeights: c_prime must be >= 1");
    if (reduce.kernel_h != 1 || reduce.kernel_w != 1 || reduce.out_channels != c_prime)
      throw std::invalid_argument("LayerWeights: reduce must be 1x1 onto c_prime channels");
    if (expand.kernel_h != 3 || expand.kernel_w != 3 ||
        expand.in_channels != 2 * c_prime || expand.out_channels != reduce.in_channels)
      throw std::invalid_argument("LayerWeights: expand must be 3x3 from 2*c_prime back to C");
    flow.validate();
  }
};

template <class T>
LayerWeights<T> make_layer_weights(int channels, int c_prime, int iterations, Rng& rng) {
  if (channels < 1 || c_prime < 1 || iterations < 1)
    throw std::invalid_argument("make_layer_weights: bad dimensions");
  LayerWeights<T> w;
  w.iterations = iterations;
  w.c_prime = c_prime;
  w.reduce = ConvLayer<T>(channels, c_prime, 1, 1, PaddingSpec::none());
  w.expand = ConvLayer<T>(2 * c_prime, channels, 3, 3, PaddingSpec::replicate(1));
  const double a = 1.0 / std::sqrt(static_cast<double>(channels));
  for (auto& v : w.reduce.weights) v = static_cast<T>(rng.uniform(-a, a));
  const double b = 1.0 / std::sqrt(static_cast<double>(2 * c_prime) * 9.0);
  for (auto& v : w.expand.weights) v = static_cast<T>(rng.uniform(-b, b));
  return w;
}

// Pass-through smoothing conv for the two-stage composition; starts as the
// identity so the second stage initially sees the raw first-stage flows.
template <class T>
ConvLayer<T> make_mid_conv(int channels) {
  ConvLayer<T> mid(channels, channels, 3, 3, PaddingSpec::replicate(1));
  for (int c = 0; c < channels; ++c) mid.kernel_at(c, c)[4] = T(1);
  return mid;
}

template <class T>
struct LayerTape {
  LayerWeights<T> weights;
  Tensor<T> ft, ft1;
  NormalizeTape<T> norm_t, norm_t1;
  std::vector<FlowTape<T>> flows;
  Tensor<T> stack;
};

template <class T>
struct LayerResult {
  Tensor<T> value;
  LayerTape<T> tape;
};

// reduce both frames with shared weights -> rescale each channel to [0,255]
// -> per-channel flow -> interleave (u_x ch0, u_y ch0, u_x ch1, ...) ->
// expand. The interleaved order is frozen: checkpoints bake it into the
// expand weights.
template <class T>
LayerResult<T> layer_forward(const Tensor<T>& ft, const Tensor<T>& ft1,
                             const LayerWeights<T>& weights, int threads = 1) {
  detail::check_nonempty(ft, "layer_forward");
  detail::check_same_shape(ft, ft1, "layer_forward");
  weights.validate();
  if (ft.channels() != weights.channels())
    throw std::invalid_argument("layer_forward: input has " + std::to_string(ft.channels()) +
                                " channels, weights expect " +
                                std::to_string(weights.channels()));
  ft.require_finite("layer_forward: Ft");
  ft1.require_finite("layer_forward: Ft1");

  LayerResult<T> res;
  LayerTape<T>& tape = res.tape;
  tape.weights = weights;
  tape.ft = ft;
  tape.ft1 = ft1;

  const Tensor<T> reduced_t = conv_layer_forward(weights.reduce, ft);
  const Tensor<T> reduced_t1 = conv_layer_forward(weights.reduce, ft1);
  NormalizeResult<T> norm_t = normalize_255(reduced_t);
  NormalizeResult<T> norm_t1 = normalize_255(reduced_t1);

  const int cp = weights.c_prime;
  tape.flows.resize(static_cast<std::size_t>(cp));
  tape.stack = Tensor<T>(2 * cp, ft.height(), ft.width());
  parallel_for_index(cp, threads, [&](int c) {
    FlowResult<T> fr = rep_flow_forward(norm_t.value.slice_channel(c),
                                        norm_t1.value.slice_channel(c), weights.flow,
                                        weights.iterations);
    tape.stack.set_channel(2 * c, fr.flow.u_x);
    tape.stack.set_channel(2 * c + 1, fr.flow.u_y);
    tape.flows[static_cast<std::size_t>(c)] = std::move(fr.tape);
  });

  tape.norm_t = std::move(norm_t.tape);
  tape.norm_t1 = std::move(norm_t1.tape);
  res.value = conv_layer_forward(weights.expand, tape.stack);
  return res;
}

template <class T>
struct LayerGradients {
  ConvLayerGrads<T> d_reduce;
  ConvLayerGrads<T> d_expand;
  FlowParamGrads<T> d_flow;
  Tensor<T> d_ft;
  Tensor<T> d_ft1;

  void accumulate_params(const LayerGradients& o) {
    d_reduce.accumulate(o.d_reduce);
    d_expand.accumulate(o.d_expand);
    d_flow.accumulate(o.d_flow);
  }
};

template <class T>
LayerGradients<T> layer_backward(const LayerTape<T>& tape, const Tensor<T>& d_out,
                                 int threads = 1) {
  const LayerWeights<T>& weights = tape.weights;
  if (!d_out.same_shape(tape.ft))
    throw std::invalid_argument("layer_backward: upstream shape mismatch");
  d_out.require_finite("layer_backward: upstream");

  LayerGradients<T> g;
  g.d_reduce = ConvLayerGrads<T>(weights.reduce);
  g.d_expand = ConvLayerGrads<T>(weights.expand);

  Tensor<T> d_stack;
  conv_layer_backward(weights.expand, tape.stack, d_out, g.d_expand, &d_stack);

  const int cp = weights.c_prime;
  const int h = tape.ft.height();
  const int w = tape.ft.width();
  std::vector<FlowGradients<T>> per_channel(static_cast<std::size_t>(cp));
  parallel_for_index(cp, threads, [&](int c) {
    FlowField<T> up(h, w);
    up.u_x = d_stack.slice_channel(2 * c);
    up.u_y = d_stack.slice_channel(2 * c + 1);
    per_channel[static_cast<std::size_t>(c)] =
        rep_flow_backward(tape.flows[static_cast<std::size_t>(c)], up);
  });

  Tensor<T> d_norm_t(cp, h, w);
  Tensor<T> d_norm_t1(cp, h, w);
  for (int c = 0; c < cp; ++c) {
    const auto& fg = per_channel[static_cast<std::size_t>(c)];
    g.d_flow.accumulate(fg.params);
    d_norm_t.set_channel(c, fg.d_f1);
    d_norm_t1.set_channel(c, fg.d_f2);
  }

  const Tensor<T> d_reduced_t = normalize_255_backward(tape.norm_t, d_norm_t);
  const Tensor<T> d_reduced_t1 = normalize_255_backward(tape.norm_t1, d_norm_t1);
  conv_layer_backward(weights.reduce, tape.ft, d_reduced_t, g.d_reduce, &g.d_ft);
  conv_layer_backward(weights.reduce, tape.ft1, d_reduced_t1, g.d_reduce, &g.d_ft1);
  return g;
}

// ---- flow of flow -----------------------------------------------------------

template <class T>
struct FcfTape {
  LayerTape<T> a1, a2;
  Tensor<T> a1_out, a2_out;
  ConvLayer<T> mid;
  LayerTape<T> b;
};

template <class T>
struct FcfResult {
  Tensor<T> value;
  FcfTape<T> tape;
};

template <class T>
struct FcfGradients {
  LayerGradients<T> d_stage_a;  // both stage-a applications, accumulated
  ConvLayerGrads<T> d_mid;
  LayerGradients<T> d_stage_b;
  Tensor<T> d_ft, d_ft1, d_ft2;
};

// Two first-stage flows through a shared smoothing convolution, then a second
// flow stage over the pair of smoothed flow features.
template <class T>
FcfResult<T> flow_conv_flow(const Tensor<T>& ft, const Tensor<T>& ft1, const Tensor<T>& ft2,
                            const LayerWeights<T>& weights_a, const ConvLayer<T>& mid,
                            const LayerWeights<T>& weights_b, int threads = 1) {
  detail::check_same_shape(ft, ft1, "flow_conv_flow");
  detail::check_same_shape(ft, ft2, "flow_conv_flow");
  if (mid.kernel_h != 3 || mid.kernel_w != 3 || mid.in_channels != weights_a.channels() ||
      mid.out_channels != weights_b.channels())
    throw std::invalid_argument("flow_conv_flow: mid must be 3x3 mapping stage-a to stage-b channels");
  if (mid.pad.left != 1 || mid.pad.right != 1 || mid.pad.top != 1 || mid.pad.bottom != 1)
    throw std::invalid_argument("flow_conv_flow: mid must pad by 1 to preserve shape");

  FcfResult<T> res;
  LayerResult<T> r1 = layer_forward(ft, ft1, weights_a, threads);
  LayerResult<T> r2 = layer_forward(ft1, ft2, weights_a, threads);
  res.tape.a1 = std::move(r1.tape);
  res.tape.a2 = std::move(r2.tape);
  res.tape.a1_out = std::move(r1.value);
  res.tape.a2_out = std::move(r2.value);
  res.tape.mid = mid;

  const Tensor<T> m1 = conv_layer_forward(mid, res.tape.a1_out);
  const Tensor<T> m2 = conv_layer_forward(mid, res.tape.a2_out);
  LayerResult<T> rb = layer_forward(m1, m2, weights_b, threads);
  res.tape.b = std::move(rb.tape);
  res.value = std::move(rb.value);
  return res;
}

template <class T>
FcfGradients<T> flow_conv_flow_backward(const FcfTape<T>& tape, const Tensor<T>& d_out,
                                        int threads = 1) {
  FcfGradients<T> g;
  g.d_stage_b = layer_backward(tape.b, d_out, threads);

  g.d_mid = ConvLayerGrads<T>(tape.mid);
  Tensor<T> d_a1, d_a2;
  conv_layer_backward(tape.mid, tape.a1_out, g.d_stage_b.d_ft, g.d_mid, &d_a1);
  conv_layer_backward(tape.mid, tape.a2_out, g.d_stage_b.d_ft1, g.d_mid, &d_a2);

  g.d_stage_a = layer_backward(tape.a1, d_a1, threads);
  LayerGradients<T> ga2 = layer_backward(tape.a2, d_a2, threads);

  g.d_ft = g.d_stage_a.d_ft;
  g.d_ft1 = add(g.d_stage_a.d_ft1, ga2.d_ft);
  g.d_ft2 = ga2.d_ft1;
  g.d_stage_a.accumulate_params(ga2);
  return g;
}

// ---- checkpoint serialization ----------------------------------------------
// Scalars are stored in their log form so a save/load/save cycle is bit-exact.

template <class T>
std::vector<NamedTensor> layer_weights_to_tensors(const LayerWeights<T>& w,
                                                  const std::string& prefix) {
  auto kernel_tensor = [&](const std::string& name, const Kernel2D<T>& k) {
    NamedTensor t;
    t.name = prefix + name;
    t.dims = {static_cast<std::uint64_t>(k.rows()), static_cast<std::uint64_t>(k.cols())};
    t.data.assign(k.data(), k.data() + k.size());
    return t;
  };
  auto scalar_tensor = [&](const std::string& name, double v) {
    NamedTensor t;
    t.name = prefix + name;
    t.dims = {1};
    t.data = {v};
    return t;
  };

  std::vector<NamedTensor> out;
  NamedTensor rw;
  rw.name = prefix + "reduce.weight";
  rw.dims = {static_cast<std::uint64_t>(w.reduce.out_channels),
             static_cast<std::uint64_t>(w.reduce.in_channels), 1, 1};
  rw.data.assign(w.reduce.weights.begin(), w.reduce.weights.end());
  out.push_back(std::move(rw));
  NamedTensor rb;
  rb.name = prefix + "reduce.bias";
  rb.dims = {static_cast<std::uint64_t>(w.reduce.out_channels)};
  rb.data.assign(w.reduce.bias.begin(), w.reduce.bias.end());
  out.push_back(std::move(rb));
  NamedTensor ew;
  ew.name = prefix + "expand.weight";
  ew.dims = {static_cast<std::uint64_t>(w.expand.out_channels),
             static_cast<std::uint64_t>(w.expand.in_channels), 3, 3};
  ew.data.assign(w.expand.weights.begin(), w.expand.weights.end());
  out.push_back(std::move(ew));
  NamedTensor eb;
  eb.name = prefix + "expand.bias";
  eb.dims = {static_cast<std::uint64_t>(w.expand.out_channels)};
  eb.data.assign(w.expand.bias.begin(), w.expand.bias.end());
  out.push_back(std::move(eb));

  out.push_back(scalar_tensor("flow.log_tau", static_cast<double>(w.flow.log_tau())));
  out.push_back(scalar_tensor("flow.log_lambda", static_cast<double>(w.flow.log_lambda())));
  out.push_back(scalar_tensor("flow.log_theta", static_cast<double>(w.flow.log_theta())));
  out.push_back(kernel_tensor("flow.w_x", w.flow.w_x));
  out.push_back(kernel_tensor("flow.w_y", w.flow.w_y));
  out.push_back(kernel_tensor("flow.sobel_x", w.flow.sobel_x));
  out.push_back(kernel_tensor("flow.sobel_y", w.flow.sobel_y));
  out.push_back(scalar_tensor("iterations", static_cast<double>(w.iterations)));
  out.push_back(scalar_tensor("c_prime", static_cast<double>(w.c_prime)));
  return out;
}

namespace detail {

inline const NamedTensor& find_tensor(const std::vector<NamedTensor>& ts,
                                      const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  throw IoError("checkpoint: missing tensor '" + name + "'");
}

}  // namespace detail

template <class T>
LayerWeights<T> layer_weights_from_tensors(const std::vector<NamedTensor>& ts,
                                           const std::string& prefix) {
  auto get = [&](const std::string& name) -> const NamedTensor& {
    return detail::find_tensor(ts, prefix + name);
  };
  auto load_kernel = [&](const std::string& name, int rows, int cols) {
    const NamedTensor& t = get(name);
    if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(rows) ||
        t.dims[1] != static_cast<std::uint64_t>(cols) ||
        t.data.size() != static_cast<std::size_t>(rows) * cols)
      throw IoError("checkpoint: tensor '" + t.name + "' has unexpected shape");
    Kernel2D<T> k(rows, cols);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<T>(t.data[i]);
    return k;
  };
  auto load_scalar = [&](const std::string& name) {
    const NamedTensor& t = get(name);
    if (t.data.size() != 1) throw IoError("checkpoint: tensor '" + t.name + "' is not a scalar");
    return t.data[0];
  };

  LayerWeights<T> w;
  w.iterations = static_cast<int>(load_scalar("iterations"));
  w.c_prime = static_cast<int>(load_scalar("c_prime"));

  const NamedTensor& rw = get("reduce.weight");
  if (rw.dims.size() != 4 || rw.dims[2] != 1 || rw.dims[3] != 1)
    throw IoError("checkpoint: reduce.weight has unexpected shape");
  const int cp = static_cast<int>(rw.dims[0]);
  const int channels = static_cast<int>(rw.dims[1]);
  w.reduce = ConvLayer<T>(channels, cp, 1, 1, PaddingSpec::none());
  if (rw.data.size() != w.reduce.weights.size())
    throw IoError("checkpoint: reduce.weight size mismatch");
  for (std::size_t i = 0; i < rw.data.size(); ++i)
    w.reduce.weights[i] = static_cast<T>(rw.data[i]);
  const NamedTensor& rb = get("reduce.bias");
  if (rb.data.size() != w.reduce.bias.size())
    throw IoError("checkpoint: reduce.bias size mismatch");
  for (std::size_t i = 0; i < rb.data.size(); ++i)
    w.reduce.bias[i] = static_cast<T>(rb.data[i]);

  const NamedTensor& ew = get("expand.weight");
  if (ew.dims.size() != 4 || ew.dims[2] != 3 || ew.dims[3] != 3 ||
      ew.dims[0] != static_cast<std::uint64_t>(channels) ||
      ew.dims[1] != static_cast<std::uint64_t>(2 * cp))
    throw IoError("checkpoint: expand.weight has unexpected shape");
  w.expand = ConvLayer<T>(2 * cp, channels, 3, 3, PaddingSpec::replicate(1));
  if (ew.data.size() != w.expand.weights.size())
    throw IoError("checkpoint: expand.weight size mismatch");
  for (std::size_t i = 0; i < ew.data.size(); ++i)
    w.expand.weights[i] = static_cast<T>(ew.data[i]);
  const NamedTensor& eb = get("expand.bias");
  if (eb.data.size() != w.expand.bias.size())
    throw IoError("checkpoint: expand.bias size mismatch");
  for (std::size_t i = 0; i < eb.data.size(); ++i)
    w.expand.bias[i] = static_cast<T>(eb.data[i]);

  w.flow.set_log_tau(static_cast<T>(load_scalar("flow.log_tau")));
  w.flow.set_log_lambda(static_cast<T>(load_scalar("flow.log_lambda")));
  w.flow.set_log_theta(static_cast<T>(load_scalar("flow.log_theta")));
  w.flow.w_x = load_kernel("flow.w_x", 1, 2);
  w.flow.w_y = load_kernel("flow.w_y", 2, 1);
  w.flow.sobel_x = load_kernel("flow.sobel_x", 3, 3);
  w.flow.sobel_y = load_kernel("flow.sobel_y", 3, 3);
  w.validate();
  return w;
}

}  // namespace repflow
