#pragma once

#include <stdexcept>
#include <utility>

#include "repflow/tensor.hpp"

namespace repflow {

// All convolutions use the correlation convention (no kernel flip): the
// kernel matrix is applied directly as written. Fixed globally; every golden
// value in the test suite assumes it.

namespace detail {

// Maps a padded coordinate back to a source coordinate. Returns false when the
// coordinate falls inside zero padding.
inline bool unpad_coord(int padded, int pad_before, int extent, PadMode mode, int& src) {
  int q = padded - pad_before;
  if (q >= 0 && q < extent) {
    src = q;
    return true;
  }
  if (mode == PadMode::Zero) return false;
  src = q < 0 ? 0 : extent - 1;
  return true;
}

template <class T>
void check_conv_args(const Tensor<T>& input, const Kernel2D<T>& kernel,
                     const PaddingSpec& pad, int& out_h, int& out_w) {
  check_nonempty(input, "conv2d");
  if (input.channels() != 1)
    throw std::invalid_argument("conv2d: expected single-channel input, got " +
                                input.shape_string());
  if (kernel.empty()) throw std::invalid_argument("conv2d: empty kernel");
  pad.validate();
  const int ph = input.height() + pad.top + pad.bottom;
  const int pw = input.width() + pad.left + pad.right;
  out_h = ph - kernel.rows() + 1;
  out_w = pw - kernel.cols() + 1;
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(kernel.rows()) + "x" +
                                std::to_string(kernel.cols()) +
                                " larger than padded input " + std::to_string(ph) + "x" +
                                std::to_string(pw));
}

}  // namespace detail

// out[y][x] = sum_{r,c} kernel[r][c] * padded_input[y+r][x+c]
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Kernel2D<T>& kernel, const PaddingSpec& pad) {
  int out_h = 0, out_w = 0;
  detail::check_conv_args(input, kernel, pad, out_h, out_w);

  Tensor<T> out(1, out_h, out_w);
  const int in_h = input.height();
  const int in_w = input.width();
  const T* in = input.data();
  T* dst = out.data();
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      T acc = T(0);
      for (int r = 0; r < kernel.rows(); ++r) {
        int sy;
        const bool row_ok = detail::unpad_coord(y + r, pad.top, in_h, pad.mode, sy);
        for (int c = 0; c < kernel.cols(); ++c) {
          int sx;
          if (!row_ok || !detail::unpad_coord(x + c, pad.left, in_w, pad.mode, sx)) continue;
          acc += kernel(r, c) * in[static_cast<std::size_t>(sy) * in_w + sx];
        }
      }
      dst[static_cast<std::size_t>(y) * out_w + x] = acc;
    }
  }
  return out;
}

// Reverse-mode adjoints of conv2d. Zero-padded taps contribute nothing; with
// replicate padding the adjoint of a padded cell accumulates into the edge
// cell it mirrors.
template <class T>
void conv2d_backward(const Tensor<T>& input, const Kernel2D<T>& kernel, const PaddingSpec& pad,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input, Kernel2D<T>* grad_kernel) {
  int out_h = 0, out_w = 0;
  detail::check_conv_args(input, kernel, pad, out_h, out_w);
  if (grad_out.channels() != 1 || grad_out.height() != out_h || grad_out.width() != out_w)
    throw std::invalid_argument("conv2d_backward: upstream gradient shape mismatch");

  if (grad_input && !grad_input->same_shape(input)) *grad_input = Tensor<T>(1, input.height(), input.width());
  if (grad_kernel && !grad_kernel->same_shape(kernel)) *grad_kernel = Kernel2D<T>(kernel.rows(), kernel.cols());

  const int in_h = input.height();
  const int in_w = input.width();
  const T* in = input.data();
  const T* go = grad_out.data();
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const T g = go[static_cast<std::size_t>(y) * out_w + x];
      if (g == T(0)) continue;
      for (int r = 0; r < kernel.rows(); ++r) {
        int sy;
        const bool row_ok = detail::unpad_coord(y + r, pad.top, in_h, pad.mode, sy);
        for (int c = 0; c < kernel.cols(); ++c) {
          int sx;
          if (!row_ok || !detail::unpad_coord(x + c, pad.left, in_w, pad.mode, sx)) continue;
          const std::size_t si = static_cast<std::size_t>(sy) * in_w + sx;
          if (grad_kernel) (*grad_kernel)(r, c) += g * in[si];
          if (grad_input) (*grad_input)[si] += g * kernel(r, c);
        }
      }
    }
  }
}

// Multi-channel convolution layer: weights laid out as
// [out_c][in_c][kh][kw] in one flat tensor-of-kernels, plus a bias per output
// channel. Used by the channel reduce/expand wrappers and the toy model.
template <class T>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  PaddingSpec pad;
  std::vector<T> weights;  // out_c * in_c * kh * kw
  std::vector<T> bias;     // out_c

  ConvLayer() = default;
  ConvLayer(int in_c, int out_c, int kh, int kw, PaddingSpec p)
      : in_channels(in_c), out_channels(out_c), kernel_h(kh), kernel_w(kw), pad(p) {
    if (in_c < 1 || out_c < 1 || kh < 1 || kw < 1)
      throw std::invalid_argument("ConvLayer: bad dimensions");
    weights.assign(static_cast<std::size_t>(out_c) * in_c * kh * kw, T(0));
    bias.assign(static_cast<std::size_t>(out_c), T(0));
  }

  std::size_t weight_count() const { return weights.size(); }

  T* kernel_at(int oc, int ic) {
    return weights.data() + ((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_h) * kernel_w;
  }
  const T* kernel_at(int oc, int ic) const {
    return weights.data() + ((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_h) * kernel_w;
  }

  bool same_shape(const ConvLayer& o) const {
    return in_channels == o.in_channels && out_channels == o.out_channels &&
           kernel_h == o.kernel_h && kernel_w == o.kernel_w;
  }
};

template <class T>
Tensor<T> conv_layer_forward(const ConvLayer<T>& layer, const Tensor<T>& input) {
  detail::check_nonempty(input, "conv_layer_forward");
  if (input.channels() != layer.in_channels)
    throw std::invalid_argument("conv_layer_forward: input has " +
                                std::to_string(input.channels()) + " channels, layer expects " +
                                std::to_string(layer.in_channels));
  layer.pad.validate();
  const int ph = input.height() + layer.pad.top + layer.pad.bottom;
  const int pw = input.width() + layer.pad.left + layer.pad.right;
  const int out_h = ph - layer.kernel_h + 1;
  const int out_w = pw - layer.kernel_w + 1;
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("conv_layer_forward: kernel larger than padded input");

  Tensor<T> out(layer.out_channels, out_h, out_w);
  const int in_h = input.height();
  const int in_w = input.width();
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    T* dst = out.channel(oc);
    const T b = layer.bias[static_cast<std::size_t>(oc)];
    for (std::size_t i = 0; i < out.plane_size(); ++i) dst[i] = b;
    for (int ic = 0; ic < layer.in_channels; ++ic) {
      const T* k = layer.kernel_at(oc, ic);
      const T* in = input.channel(ic);
      for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
          T acc = T(0);
          for (int r = 0; r < layer.kernel_h; ++r) {
            int sy;
            const bool row_ok = detail::unpad_coord(y + r, layer.pad.top, in_h, layer.pad.mode, sy);
            for (int c = 0; c < layer.kernel_w; ++c) {
              int sx;
              if (!row_ok || !detail::unpad_coord(x + c, layer.pad.left, in_w, layer.pad.mode, sx))
                continue;
              acc += k[r * layer.kernel_w + c] * in[static_cast<std::size_t>(sy) * in_w + sx];
            }
          }
          dst[static_cast<std::size_t>(y) * out_w + x] += acc;
        }
      }
    }
  }
  return out;
}

template <class T>
struct ConvLayerGrads {
  std::vector<T> weights;
  std::vector<T> bias;

  ConvLayerGrads() = default;
  explicit ConvLayerGrads(const ConvLayer<T>& layer)
      : weights(layer.weights.size(), T(0)), bias(layer.bias.size(), T(0)) {}

  void accumulate(const ConvLayerGrads& o) {
    if (weights.size() != o.weights.size() || bias.size() != o.bias.size())
      throw std::invalid_argument("ConvLayerGrads: shape mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += o.weights[i];
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += o.bias[i];
  }
};

// grad_input may be null when the input is a leaf nobody differentiates.
template <class T>
void conv_layer_backward(const ConvLayer<T>& layer, const Tensor<T>& input,
                         const Tensor<T>& grad_out, ConvLayerGrads<T>& grads,
                         Tensor<T>* grad_input) {
  if (grad_out.channels() != layer.out_channels)
    throw std::invalid_argument("conv_layer_backward: upstream channel mismatch");
  if (grads.weights.size() != layer.weights.size())
    throw std::invalid_argument("conv_layer_backward: grads not sized for layer");
  if (grad_input && !grad_input->same_shape(input))
    *grad_input = Tensor<T>(input.channels(), input.height(), input.width());

  const int in_h = input.height();
  const int in_w = input.width();
  const int out_h = grad_out.height();
  const int out_w = grad_out.width();
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    const T* go = grad_out.channel(oc);
    T bias_acc = T(0);
    for (std::size_t i = 0; i < grad_out.plane_size(); ++i) bias_acc += go[i];
    grads.bias[static_cast<std::size_t>(oc)] += bias_acc;
    for (int ic = 0; ic < layer.in_channels; ++ic) {
      const T* k = layer.kernel_at(oc, ic);
      T* gk = grads.weights.data() +
              ((static_cast<std::size_t>(oc) * layer.in_channels + ic) * layer.kernel_h) *
                  layer.kernel_w;
      const T* in = input.channel(ic);
      T* gi = grad_input ? grad_input->channel(ic) : nullptr;
      for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
          const T g = go[static_cast<std::size_t>(y) * out_w + x];
          if (g == T(0)) continue;
          for (int r = 0; r < layer.kernel_h; ++r) {
            int sy;
            const bool row_ok =
                detail::unpad_coord(y + r, layer.pad.top, in_h, layer.pad.mode, sy);
            for (int c = 0; c < layer.kernel_w; ++c) {
              int sx;
              if (!row_ok || !detail::unpad_coord(x + c, layer.pad.left, in_w, layer.pad.mode, sx))
                continue;
              const std::size_t si = static_cast<std::size_t>(sy) * in_w + sx;
              gk[r * layer.kernel_w + c] += g * in[si];
              if (gi) gi[si] += g * k[r * layer.kernel_w + c];
            }
          }
        }
      }
    }
  }
}

}  // namespace repflow
