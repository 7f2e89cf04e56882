#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "repflow/conv.hpp"
#include "repflow/errors.hpp"
#include "repflow/feature_layer.hpp"
#include "repflow/flow_params.hpp"

namespace repflow {

// SGD with momentum: buf = m*buf + grad, param -= rate*buf. Flow-solver
// leaves step at 0.01x the base rate; the scalar positives step in log space,
// with the chain factor d(log p) = p * d(p), so they stay positive.

namespace detail {

template <class T>
void check_grad_finite(T g, const char* leaf) {
  if (!std::isfinite(g))
    throw NumericalError(std::string("step_parameters: non-finite gradient for ") + leaf);
}

template <class T>
void check_grad_finite(const Kernel2D<T>& g, const char* leaf) {
  for (std::size_t i = 0; i < g.size(); ++i) check_grad_finite(g[i], leaf);
}

template <class T>
void step_kernel(Kernel2D<T>& k, const Kernel2D<T>& g, T rate, T momentum, Kernel2D<T>& buf) {
  for (std::size_t i = 0; i < k.size(); ++i) {
    buf[i] = momentum * buf[i] + g[i];
    k[i] -= rate * buf[i];
  }
}

}  // namespace detail

template <class T>
struct FlowOptState {
  T m_log_tau = T(0);
  T m_log_lambda = T(0);
  T m_log_theta = T(0);
  Kernel2D<T> m_w_x{1, 2};
  Kernel2D<T> m_w_y{2, 1};
  Kernel2D<T> m_sobel_x{3, 3};
  Kernel2D<T> m_sobel_y{3, 3};
};

template <class T>
void step_flow_params(FlowParams<T>& p, const FlowParamGrads<T>& g, T lr, FlowOptState<T>& st,
                      T momentum = T(0.9)) {
  if (!(lr > T(0))) throw std::invalid_argument("step_flow_params: lr must be > 0");
  detail::check_grad_finite(g.d_tau, "tau");
  detail::check_grad_finite(g.d_lambda, "lambda");
  detail::check_grad_finite(g.d_theta, "theta");
  detail::check_grad_finite(g.d_w_x, "w_x");
  detail::check_grad_finite(g.d_w_y, "w_y");
  detail::check_grad_finite(g.d_sobel_x, "sobel_x");
  detail::check_grad_finite(g.d_sobel_y, "sobel_y");

  const T rate = T(0.01) * lr;
  if (p.learn.scalars) {
    st.m_log_tau = momentum * st.m_log_tau + g.d_tau * p.tau();
    st.m_log_lambda = momentum * st.m_log_lambda + g.d_lambda * p.lambda();
    st.m_log_theta = momentum * st.m_log_theta + g.d_theta * p.theta();
    p.set_log_tau(p.log_tau() - rate * st.m_log_tau);
    p.set_log_lambda(p.log_lambda() - rate * st.m_log_lambda);
    p.set_log_theta(p.log_theta() - rate * st.m_log_theta);
  }
  if (p.learn.divergence) {
    detail::step_kernel(p.w_x, g.d_w_x, rate, momentum, st.m_w_x);
    detail::step_kernel(p.w_y, g.d_w_y, rate, momentum, st.m_w_y);
  }
  if (p.learn.sobel) {
    detail::step_kernel(p.sobel_x, g.d_sobel_x, rate, momentum, st.m_sobel_x);
    detail::step_kernel(p.sobel_y, g.d_sobel_y, rate, momentum, st.m_sobel_y);
  }
}

template <class T>
struct ConvOptState {
  std::vector<T> m_weights;
  std::vector<T> m_bias;

  ConvOptState() = default;
  explicit ConvOptState(const ConvLayer<T>& layer)
      : m_weights(layer.weights.size(), T(0)), m_bias(layer.bias.size(), T(0)) {}
};

template <class T>
void step_conv_layer(ConvLayer<T>& layer, const ConvLayerGrads<T>& g, T lr, ConvOptState<T>& st,
                     const char* leaf, T momentum = T(0.9)) {
  if (!(lr > T(0))) throw std::invalid_argument("step_conv_layer: lr must be > 0");
  if (g.weights.size() != layer.weights.size() || st.m_weights.size() != layer.weights.size())
    throw std::invalid_argument("step_conv_layer: shape mismatch");
  for (T v : g.weights) detail::check_grad_finite(v, leaf);
  for (T v : g.bias) detail::check_grad_finite(v, leaf);
  for (std::size_t i = 0; i < layer.weights.size(); ++i) {
    st.m_weights[i] = momentum * st.m_weights[i] + g.weights[i];
    layer.weights[i] -= lr * st.m_weights[i];
  }
  for (std::size_t i = 0; i < layer.bias.size(); ++i) {
    st.m_bias[i] = momentum * st.m_bias[i] + g.bias[i];
    layer.bias[i] -= lr * st.m_bias[i];
  }
}

template <class T>
struct LayerOptState {
  ConvOptState<T> reduce;
  ConvOptState<T> expand;
  FlowOptState<T> flow;

  LayerOptState() = default;
  explicit LayerOptState(const LayerWeights<T>& w)
      : reduce(w.reduce), expand(w.expand) {}
};

// The reduce/expand convolutions are ordinary network weights and use the
// base rate; the flow leaves use 0.01x inside step_flow_params.
template <class T>
void step_layer_weights(LayerWeights<T>& w, const LayerGradients<T>& g, T lr,
                        LayerOptState<T>& st, T momentum = T(0.9)) {
  step_conv_layer(w.reduce, g.d_reduce, lr, st.reduce, "reduce", momentum);
  step_conv_layer(w.expand, g.d_expand, lr, st.expand, "expand", momentum);
  step_flow_params(w.flow, g.d_flow, lr, st.flow, momentum);
}

}  // namespace repflow
