#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "repflow/conv.hpp"
#include "repflow/errors.hpp"
#include "repflow/flow_params.hpp"
#include "repflow/tensor.hpp"
#include "repflow/tvl1.hpp"

namespace repflow {

// Branch taken by the thresholded data-term update at each pixel.
enum BranchId : std::uint8_t { kBranchNeg = 0, kBranchPos = 1, kBranchMid = 2 };

namespace detail {

inline PaddingSpec div_pad_x() { return {PadMode::Zero, 1, 0, 0, 0}; }
inline PaddingSpec div_pad_y() { return {PadMode::Zero, 0, 0, 1, 0}; }

}  // namespace detail

// Everything the reverse pass needs: the gradient-source frame, the
// iteration-invariant fields, and per iteration the entering primal/dual
// state plus the branch mask. Memory is O(iterations * pixels).
template <class T>
struct FlowTape {
  FlowParams<T> params;
  int iterations = 0;
  int height = 0;
  int width = 0;

  Tensor<T> f2;
  Tensor<T> gx, gy, grad_sq, rho_c;

  struct IterationRecord {
    Tensor<T> ux, uy;                 // u entering this iteration
    Tensor<T> pxx, pxy, pyx, pyy;     // p entering this iteration
    std::vector<std::uint8_t> mask;   // BranchId per pixel
  };
  std::vector<IterationRecord> iters;
  Tensor<T> final_ux, final_uy;       // u after the last iteration
};

template <class T>
struct FlowResult {
  FlowField<T> flow;
  FlowTape<T> tape;
};

// Gradients of the solver's learnable parameters.
template <class T>
struct FlowParamGrads {
  T d_tau = T(0);
  T d_lambda = T(0);
  T d_theta = T(0);
  Kernel2D<T> d_w_x{1, 2};
  Kernel2D<T> d_w_y{2, 1};
  Kernel2D<T> d_sobel_x{3, 3};
  Kernel2D<T> d_sobel_y{3, 3};

  void accumulate(const FlowParamGrads& o) {
    d_tau += o.d_tau;
    d_lambda += o.d_lambda;
    d_theta += o.d_theta;
    for (std::size_t i = 0; i < d_w_x.size(); ++i) d_w_x[i] += o.d_w_x[i];
    for (std::size_t i = 0; i < d_w_y.size(); ++i) d_w_y[i] += o.d_w_y[i];
    for (std::size_t i = 0; i < d_sobel_x.size(); ++i) d_sobel_x[i] += o.d_sobel_x[i];
    for (std::size_t i = 0; i < d_sobel_y.size(); ++i) d_sobel_y[i] += o.d_sobel_y[i];
  }

  void require_finite() const {
    if (!std::isfinite(d_tau)) throw NumericalError("flow gradients: d_tau non-finite");
    if (!std::isfinite(d_lambda)) throw NumericalError("flow gradients: d_lambda non-finite");
    if (!std::isfinite(d_theta)) throw NumericalError("flow gradients: d_theta non-finite");
    for (std::size_t i = 0; i < d_w_x.size(); ++i)
      if (!std::isfinite(d_w_x[i])) throw NumericalError("flow gradients: d_w_x non-finite");
    for (std::size_t i = 0; i < d_w_y.size(); ++i)
      if (!std::isfinite(d_w_y[i])) throw NumericalError("flow gradients: d_w_y non-finite");
    for (std::size_t i = 0; i < d_sobel_x.size(); ++i)
      if (!std::isfinite(d_sobel_x[i]))
        throw NumericalError("flow gradients: d_sobel_x non-finite");
    for (std::size_t i = 0; i < d_sobel_y.size(); ++i)
      if (!std::isfinite(d_sobel_y[i]))
        throw NumericalError("flow gradients: d_sobel_y non-finite");
  }
};

// Full gradient bundle of one solver call: parameter leaves plus both inputs.
template <class T>
struct FlowGradients {
  FlowParamGrads<T> params;
  Tensor<T> d_f1;
  Tensor<T> d_f2;
};

// Unrolled TV-L1 iterations with learnable kernels and scalars. Matches the
// fixed-kernel reference solver value for value at equal parameters: same
// expressions, same evaluation order, kernels applied through the shared conv
// machinery whose accumulation order equals the reference's raw loops.
template <class T>
FlowResult<T> rep_flow_forward(const Tensor<T>& f1, const Tensor<T>& f2,
                               const FlowParams<T>& params, int iterations) {
  detail::check_nonempty(f1, "rep_flow_forward");
  detail::check_same_shape(f1, f2, "rep_flow_forward");
  if (f1.channels() != 1)
    throw std::invalid_argument("rep_flow_forward: expected single-channel inputs");
  if (iterations < 1) throw std::invalid_argument("rep_flow_forward: iterations must be >= 1");
  params.validate();
  f1.require_finite("rep_flow_forward: F1");
  f2.require_finite("rep_flow_forward: F2");

  const int h = f1.height();
  const int w = f1.width();
  const std::size_t n = f1.plane_size();
  const PaddingSpec sobel_pad = PaddingSpec::replicate(1);

  FlowResult<T> res;
  FlowTape<T>& tape = res.tape;
  tape.params = params;
  tape.iterations = iterations;
  tape.height = h;
  tape.width = w;
  tape.f2 = f2;

  tape.gx = conv2d(f2, params.sobel_x, sobel_pad);
  tape.gy = conv2d(f2, params.sobel_y, sobel_pad);
  tape.grad_sq = Tensor<T>(1, h, w);
  tape.rho_c = Tensor<T>(1, h, w);
  for (std::size_t i = 0; i < n; ++i) {
    tape.grad_sq[i] = tape.gx[i] * tape.gx[i] + tape.gy[i] * tape.gy[i];
    tape.rho_c[i] = f2[i] - f1[i];
  }

  const T tau = params.tau();
  const T lambda = params.lambda();
  const T theta = params.theta();
  const T lt = lambda * theta;
  const T taut = tau / theta;
  const T eps = RealTraits<T>::div_eps;

  Tensor<T> ux(1, h, w), uy(1, h, w);
  Tensor<T> pxx(1, h, w), pxy(1, h, w), pyx(1, h, w), pyy(1, h, w);

  tape.iters.reserve(static_cast<std::size_t>(iterations));
  for (int iter = 0; iter < iterations; ++iter) {
    auto& rec = tape.iters.emplace_back();
    rec.ux = ux;
    rec.uy = uy;
    rec.pxx = pxx;
    rec.pxy = pxy;
    rec.pyx = pyx;
    rec.pyy = pyy;
    rec.mask.resize(n);

    const Tensor<T> dxx = conv2d(pxx, params.w_x, detail::div_pad_x());
    const Tensor<T> dxy = conv2d(pxy, params.w_y, detail::div_pad_y());
    const Tensor<T> dyx = conv2d(pyx, params.w_x, detail::div_pad_x());
    const Tensor<T> dyy = conv2d(pyy, params.w_y, detail::div_pad_y());

    for (std::size_t i = 0; i < n; ++i) {
      const T rho = tape.rho_c[i] + tape.gx[i] * ux[i] + tape.gy[i] * uy[i];
      const T t = lt * tape.grad_sq[i];
      T vx, vy;
      if (rho < -t) {
        rec.mask[i] = kBranchNeg;
        vx = ux[i] + lt * tape.gx[i];
        vy = uy[i] + lt * tape.gy[i];
      } else if (rho > t) {
        rec.mask[i] = kBranchPos;
        vx = ux[i] - lt * tape.gx[i];
        vy = uy[i] - lt * tape.gy[i];
      } else {
        rec.mask[i] = kBranchMid;
        const T fi = rho / (tape.grad_sq[i] + eps);
        vx = ux[i] - fi * tape.gx[i];
        vy = uy[i] - fi * tape.gy[i];
      }
      ux[i] = vx + theta * (dxx[i] + dxy[i]);
      uy[i] = vy + theta * (dyx[i] + dyy[i]);
    }

    const Tensor<T> gxx = conv2d(ux, params.sobel_x, sobel_pad);
    const Tensor<T> gxy = conv2d(ux, params.sobel_y, sobel_pad);
    const Tensor<T> gyx = conv2d(uy, params.sobel_x, sobel_pad);
    const Tensor<T> gyy = conv2d(uy, params.sobel_y, sobel_pad);
    for (std::size_t i = 0; i < n; ++i) {
      const T mag_x = std::sqrt(gxx[i] * gxx[i] + gxy[i] * gxy[i]);
      const T mag_y = std::sqrt(gyx[i] * gyx[i] + gyy[i] * gyy[i]);
      const T den_x = T(1) + taut * mag_x;
      const T den_y = T(1) + taut * mag_y;
      pxx[i] = (pxx[i] + taut * gxx[i]) / den_x;
      pxy[i] = (pxy[i] + taut * gxy[i]) / den_x;
      pyx[i] = (pyx[i] + taut * gyx[i]) / den_y;
      pyy[i] = (pyy[i] + taut * gyy[i]) / den_y;
    }
  }

  tape.final_ux = ux;
  tape.final_uy = uy;
  res.flow.u_x = std::move(ux);
  res.flow.u_y = std::move(uy);
  res.flow.u_x.require_finite("rep_flow_forward: u_x");
  res.flow.u_y.require_finite("rep_flow_forward: u_y");
  return res;
}

// Reverse-mode pass over the recorded iterations. The thresholded update is
// differentiated with the branch frozen to the one taken in forward, so the
// threshold itself contributes nothing. |grad u| = 0 points use the zero
// subgradient for the magnitude.
template <class T>
FlowGradients<T> rep_flow_backward(const FlowTape<T>& tape, const FlowField<T>& upstream) {
  if (tape.iterations < 1 || static_cast<int>(tape.iters.size()) != tape.iterations)
    throw std::invalid_argument("rep_flow_backward: tape is empty or truncated");
  if (upstream.u_x.channels() != 1 || upstream.height() != tape.height ||
      upstream.width() != tape.width || !upstream.u_x.same_shape(upstream.u_y))
    throw std::invalid_argument("rep_flow_backward: upstream shape mismatch");
  upstream.u_x.require_finite("rep_flow_backward: upstream u_x");
  upstream.u_y.require_finite("rep_flow_backward: upstream u_y");

  const int h = tape.height;
  const int w = tape.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const PaddingSpec sobel_pad = PaddingSpec::replicate(1);
  const FlowParams<T>& params = tape.params;

  const T tau = params.tau();
  const T lambda = params.lambda();
  const T theta = params.theta();
  const T lt = lambda * theta;
  const T taut = tau / theta;
  const T eps = RealTraits<T>::div_eps;

  Tensor<T> d_ux = upstream.u_x;
  Tensor<T> d_uy = upstream.u_y;
  Tensor<T> d_pxx(1, h, w), d_pxy(1, h, w), d_pyx(1, h, w), d_pyy(1, h, w);
  Tensor<T> d_gx(1, h, w), d_gy(1, h, w), d_grad_sq(1, h, w), d_rho_c(1, h, w);
  Tensor<T> d_gxx(1, h, w), d_gxy(1, h, w), d_gyx(1, h, w), d_gyy(1, h, w);
  Tensor<T> d_dxx(1, h, w), d_dxy(1, h, w), d_dyx(1, h, w), d_dyy(1, h, w);

  FlowGradients<T> out;
  FlowParamGrads<T>& pg = out.params;
  T d_lt = T(0);
  T d_taut = T(0);
  T d_theta_direct = T(0);

  for (int iter = tape.iterations - 1; iter >= 0; --iter) {
    const auto& rec = tape.iters[static_cast<std::size_t>(iter)];
    const bool last = iter + 1 == tape.iterations;
    const Tensor<T>& next_ux = last ? tape.final_ux : tape.iters[static_cast<std::size_t>(iter) + 1].ux;
    const Tensor<T>& next_uy = last ? tape.final_uy : tape.iters[static_cast<std::size_t>(iter) + 1].uy;

    // Dual update backward. The last iteration's dual output never reaches
    // the flow output, so its adjoint is identically zero and the pass skips.
    if (!last) {
      const Tensor<T> gxx = conv2d(next_ux, params.sobel_x, sobel_pad);
      const Tensor<T> gxy = conv2d(next_ux, params.sobel_y, sobel_pad);
      const Tensor<T> gyx = conv2d(next_uy, params.sobel_x, sobel_pad);
      const Tensor<T> gyy = conv2d(next_uy, params.sobel_y, sobel_pad);
      for (std::size_t i = 0; i < n; ++i) {
        const T mag_x = std::sqrt(gxx[i] * gxx[i] + gxy[i] * gxy[i]);
        const T mag_y = std::sqrt(gyx[i] * gyx[i] + gyy[i] * gyy[i]);
        const T den_x = T(1) + taut * mag_x;
        const T den_y = T(1) + taut * mag_y;
        const T dpxx = d_pxx[i], dpxy = d_pxy[i];
        const T dpyx = d_pyx[i], dpyy = d_pyy[i];

        const T num_xx = rec.pxx[i] + taut * gxx[i];
        const T num_xy = rec.pxy[i] + taut * gxy[i];
        const T num_yx = rec.pyx[i] + taut * gyx[i];
        const T num_yy = rec.pyy[i] + taut * gyy[i];

        const T d_den_x = -(dpxx * num_xx + dpxy * num_xy) / (den_x * den_x);
        const T d_den_y = -(dpyx * num_yx + dpyy * num_yy) / (den_y * den_y);
        d_taut += dpxx * gxx[i] / den_x + dpxy * gxy[i] / den_x + d_den_x * mag_x;
        d_taut += dpyx * gyx[i] / den_y + dpyy * gyy[i] / den_y + d_den_y * mag_y;

        const T dmag_x = d_den_x * taut;
        const T dmag_y = d_den_y * taut;
        d_gxx[i] = dpxx * taut / den_x + (mag_x > T(0) ? dmag_x * gxx[i] / mag_x : T(0));
        d_gxy[i] = dpxy * taut / den_x + (mag_x > T(0) ? dmag_x * gxy[i] / mag_x : T(0));
        d_gyx[i] = dpyx * taut / den_y + (mag_y > T(0) ? dmag_y * gyx[i] / mag_y : T(0));
        d_gyy[i] = dpyy * taut / den_y + (mag_y > T(0) ? dmag_y * gyy[i] / mag_y : T(0));

        d_pxx[i] = dpxx / den_x;
        d_pxy[i] = dpxy / den_x;
        d_pyx[i] = dpyx / den_y;
        d_pyy[i] = dpyy / den_y;
      }
      conv2d_backward(next_ux, params.sobel_x, sobel_pad, d_gxx, &d_ux, &pg.d_sobel_x);
      conv2d_backward(next_ux, params.sobel_y, sobel_pad, d_gxy, &d_ux, &pg.d_sobel_y);
      conv2d_backward(next_uy, params.sobel_x, sobel_pad, d_gyx, &d_uy, &pg.d_sobel_x);
      conv2d_backward(next_uy, params.sobel_y, sobel_pad, d_gyy, &d_uy, &pg.d_sobel_y);
    }

    // Primal update backward.
    const Tensor<T> dxx = conv2d(rec.pxx, params.w_x, detail::div_pad_x());
    const Tensor<T> dxy = conv2d(rec.pxy, params.w_y, detail::div_pad_y());
    const Tensor<T> dyx = conv2d(rec.pyx, params.w_x, detail::div_pad_x());
    const Tensor<T> dyy = conv2d(rec.pyy, params.w_y, detail::div_pad_y());
    for (std::size_t i = 0; i < n; ++i) {
      const T dux_up = d_ux[i];
      const T duy_up = d_uy[i];
      d_theta_direct += dux_up * (dxx[i] + dxy[i]) + duy_up * (dyx[i] + dyy[i]);
      d_dxx[i] = dux_up * theta;
      d_dxy[i] = dux_up * theta;
      d_dyx[i] = duy_up * theta;
      d_dyy[i] = duy_up * theta;

      switch (rec.mask[i]) {
        case kBranchNeg:
          d_lt += dux_up * tape.gx[i] + duy_up * tape.gy[i];
          d_gx[i] += dux_up * lt;
          d_gy[i] += duy_up * lt;
          d_ux[i] = dux_up;
          d_uy[i] = duy_up;
          break;
        case kBranchPos:
          d_lt -= dux_up * tape.gx[i] + duy_up * tape.gy[i];
          d_gx[i] -= dux_up * lt;
          d_gy[i] -= duy_up * lt;
          d_ux[i] = dux_up;
          d_uy[i] = duy_up;
          break;
        default: {
          const T rho = tape.rho_c[i] + tape.gx[i] * rec.ux[i] + tape.gy[i] * rec.uy[i];
          const T q = tape.grad_sq[i] + eps;
          const T fi = rho / q;
          const T d_fi = -(dux_up * tape.gx[i] + duy_up * tape.gy[i]);
          d_gx[i] -= dux_up * fi;
          d_gy[i] -= duy_up * fi;
          const T d_rho = d_fi / q;
          d_grad_sq[i] -= d_fi * fi / q;
          d_rho_c[i] += d_rho;
          d_gx[i] += d_rho * rec.ux[i];
          d_gy[i] += d_rho * rec.uy[i];
          d_ux[i] = dux_up + d_rho * tape.gx[i];
          d_uy[i] = duy_up + d_rho * tape.gy[i];
          break;
        }
      }
    }
    conv2d_backward(rec.pxx, params.w_x, detail::div_pad_x(), d_dxx, &d_pxx, &pg.d_w_x);
    conv2d_backward(rec.pxy, params.w_y, detail::div_pad_y(), d_dxy, &d_pxy, &pg.d_w_y);
    conv2d_backward(rec.pyx, params.w_x, detail::div_pad_x(), d_dyx, &d_pyx, &pg.d_w_x);
    conv2d_backward(rec.pyy, params.w_y, detail::div_pad_y(), d_dyy, &d_pyy, &pg.d_w_y);
  }

  // Iteration-invariant fields: grad_sq = gx^2 + gy^2, then the gradient
  // kernels applied to F2, then rho_c = F2 - F1.
  for (std::size_t i = 0; i < n; ++i) {
    d_gx[i] += d_grad_sq[i] * T(2) * tape.gx[i];
    d_gy[i] += d_grad_sq[i] * T(2) * tape.gy[i];
  }
  out.d_f1 = Tensor<T>(1, h, w);
  out.d_f2 = Tensor<T>(1, h, w);
  conv2d_backward(tape.f2, params.sobel_x, sobel_pad, d_gx, &out.d_f2, &pg.d_sobel_x);
  conv2d_backward(tape.f2, params.sobel_y, sobel_pad, d_gy, &out.d_f2, &pg.d_sobel_y);
  for (std::size_t i = 0; i < n; ++i) {
    out.d_f2[i] += d_rho_c[i];
    out.d_f1[i] = -d_rho_c[i];
  }

  pg.d_lambda = d_lt * theta;
  pg.d_theta = d_theta_direct + d_lt * lambda - d_taut * tau / (theta * theta);
  pg.d_tau = d_taut / theta;

  pg.require_finite();
  out.d_f1.require_finite("rep_flow_backward: d_f1");
  out.d_f2.require_finite("rep_flow_backward: d_f2");
  return out;
}

// ---- [0,255] range normalization -------------------------------------------

template <class T>
struct NormalizeTape {
  struct ChannelStat {
    T min_v = T(0);
    T denom = T(1);
    std::size_t argmin = 0;
    std::size_t argmax = 0;
    bool degenerate = false;
  };
  std::vector<ChannelStat> stats;
  Tensor<T> output;
};

template <class T>
struct NormalizeResult {
  Tensor<T> value;
  NormalizeTape<T> tape;
};

// Affine per-channel rescale x -> 255*(x - min)/(max - min + eps). Constant
// channels map to zero and are excluded from differentiation.
template <class T>
NormalizeResult<T> normalize_255(const Tensor<T>& f) {
  detail::check_nonempty(f, "normalize_255");
  f.require_finite("normalize_255: input");

  const std::size_t plane = f.plane_size();
  NormalizeResult<T> res;
  res.value = Tensor<T>(f.channels(), f.height(), f.width());
  res.tape.stats.resize(static_cast<std::size_t>(f.channels()));

  for (int c = 0; c < f.channels(); ++c) {
    const T* x = f.channel(c);
    T* y = res.value.channel(c);
    auto& st = res.tape.stats[static_cast<std::size_t>(c)];

    T min_v = x[0], max_v = x[0];
    std::size_t argmin = 0, argmax = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (x[i] < min_v) {
        min_v = x[i];
        argmin = i;
      }
      if (x[i] > max_v) {
        max_v = x[i];
        argmax = i;
      }
    }
    st.min_v = min_v;
    st.argmin = argmin;
    st.argmax = argmax;
    st.degenerate = max_v == min_v;
    st.denom = max_v - min_v + RealTraits<T>::div_eps;
    if (st.degenerate) continue;  // channel already zero-filled
    for (std::size_t i = 0; i < plane; ++i) y[i] = T(255) * (x[i] - min_v) / st.denom;
  }
  res.tape.output = res.value;
  return res;
}

// min/max are differentiated as subgradients routed to the first extremal
// element in row-major order.
template <class T>
Tensor<T> normalize_255_backward(const NormalizeTape<T>& tape, const Tensor<T>& d_out) {
  if (!d_out.same_shape(tape.output))
    throw std::invalid_argument("normalize_255_backward: upstream shape mismatch");

  const std::size_t plane = d_out.plane_size();
  Tensor<T> d_in(d_out.channels(), d_out.height(), d_out.width());
  for (int c = 0; c < d_out.channels(); ++c) {
    const auto& st = tape.stats[static_cast<std::size_t>(c)];
    if (st.degenerate) continue;
    const T* dy = d_out.channel(c);
    const T* y = tape.output.channel(c);
    T* dx = d_in.channel(c);

    const T scale = T(255) / st.denom;
    T sum_dy = T(0);
    T sum_dy_y = T(0);
    for (std::size_t i = 0; i < plane; ++i) {
      sum_dy += dy[i];
      sum_dy_y += dy[i] * y[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dx[i] = dy[i] * scale;
    const T d_denom_path = sum_dy_y / st.denom;
    dx[st.argmin] += d_denom_path - sum_dy * scale;
    dx[st.argmax] -= d_denom_path;
  }
  return d_in;
}

}  // namespace repflow
