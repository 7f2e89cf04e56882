#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "repflow/kernels.hpp"
#include "repflow/tensor.hpp"

namespace repflow {

// Per-pixel displacement field, the solver's primal variable.
template <class T>
struct FlowField {
  Tensor<T> u_x;  // 1 x H x W
  Tensor<T> u_y;  // 1 x H x W

  FlowField() = default;
  FlowField(int height, int width) : u_x(1, height, width), u_y(1, height, width) {}

  int height() const { return u_x.height(); }
  int width() const { return u_x.width(); }
};

// Dual state: one 2-channel field per flow component.
template <class T>
struct DualField {
  Tensor<T> p_x;  // 2 x H x W, dual of grad(u_x)
  Tensor<T> p_y;  // 2 x H x W, dual of grad(u_y)

  DualField() = default;
  DualField(int height, int width) : p_x(2, height, width), p_y(2, height, width) {}
};

template <class T>
struct TvParams {
  T tau = T(0.25);     // time step
  T lambda = T(0.15);  // output smoothness
  T theta = T(0.3);    // TV-L1 regularization weight

  void validate() const {
    if (!(tau > T(0)) || !(lambda > T(0)) || !(theta > T(0)))
      throw std::invalid_argument("TvParams: tau, lambda, theta must be > 0");
  }
};

namespace detail {

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// 3x3 correlation with replicate borders; plain loops so the reference stays
// structurally independent of the conv machinery it validates.
template <class T>
void sobel_apply_raw(const T* in, int h, int w, const Kernel2D<T>& k, T* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int r = 0; r < 3; ++r) {
        const int sy = clamp_index(y + r - 1, h);
        for (int c = 0; c < 3; ++c) {
          const int sx = clamp_index(x + c - 1, w);
          acc += k(r, c) * in[static_cast<std::size_t>(sy) * w + sx];
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

}  // namespace detail

// Classical single-scale TV-L1 with fixed parameters and fixed kernels: the
// oracle the learnable layer is validated against. No pyramid, no warping.
//
// Each iteration applies, in order:
//   rho = rho_c + gx*u_x + gy*u_y
//   v   = threshold cases on rho (strict inequalities; ties fall through to
//         the division branch, whose denominator carries the epsilon guard)
//   u   = v + theta * divergence(p)
//   p   = (p + (tau/theta) * grad(u)) / (1 + (tau/theta) * |grad(u)|)
// with u, p starting at zero and rho_c = F2 - F1 precomputed.
template <class T>
FlowField<T> tvl1_flow(const Tensor<T>& f1, const Tensor<T>& f2, const TvParams<T>& params,
                       int iterations) {
  detail::check_nonempty(f1, "tvl1_flow");
  detail::check_same_shape(f1, f2, "tvl1_flow");
  if (f1.channels() != 1)
    throw std::invalid_argument("tvl1_flow: expected single-channel inputs");
  if (iterations < 1) throw std::invalid_argument("tvl1_flow: iterations must be >= 1");
  params.validate();
  f1.require_finite("tvl1_flow: F1");
  f2.require_finite("tvl1_flow: F2");

  const int h = f1.height();
  const int w = f1.width();
  const std::size_t n = f1.plane_size();
  const Kernel2D<T> sx = default_sobel_x<T>();
  const Kernel2D<T> sy = default_sobel_y<T>();

  std::vector<T> gx(n), gy(n), grad_sq(n), rho_c(n);
  detail::sobel_apply_raw(f2.data(), h, w, sx, gx.data());
  detail::sobel_apply_raw(f2.data(), h, w, sy, gy.data());
  for (std::size_t i = 0; i < n; ++i) {
    grad_sq[i] = gx[i] * gx[i] + gy[i] * gy[i];
    rho_c[i] = f2[i] - f1[i];
  }

  std::vector<T> ux(n, T(0)), uy(n, T(0));
  std::vector<T> pxx(n, T(0)), pxy(n, T(0)), pyx(n, T(0)), pyy(n, T(0));
  std::vector<T> gxx(n), gxy(n), gyx(n), gyy(n);

  const T lt = params.lambda * params.theta;
  const T taut = params.tau / params.theta;
  const T eps = RealTraits<T>::div_eps;

  for (int iter = 0; iter < iterations; ++iter) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const T rho = rho_c[i] + gx[i] * ux[i] + gy[i] * uy[i];
        const T t = lt * grad_sq[i];
        T vx, vy;
        if (rho < -t) {
          vx = ux[i] + lt * gx[i];
          vy = uy[i] + lt * gy[i];
        } else if (rho > t) {
          vx = ux[i] - lt * gx[i];
          vy = uy[i] - lt * gy[i];
        } else {
          const T fi = rho / (grad_sq[i] + eps);
          vx = ux[i] - fi * gx[i];
          vy = uy[i] - fi * gy[i];
        }
        // backward differences, zero beyond the first row/column
        const T dxx = pxx[i] - (x > 0 ? pxx[i - 1] : T(0));
        const T dxy = pxy[i] - (y > 0 ? pxy[i - w] : T(0));
        const T dyx = pyx[i] - (x > 0 ? pyx[i - 1] : T(0));
        const T dyy = pyy[i] - (y > 0 ? pyy[i - w] : T(0));
        ux[i] = vx + params.theta * (dxx + dxy);
        uy[i] = vy + params.theta * (dyx + dyy);
      }
    }
    detail::sobel_apply_raw(ux.data(), h, w, sx, gxx.data());
    detail::sobel_apply_raw(ux.data(), h, w, sy, gxy.data());
    detail::sobel_apply_raw(uy.data(), h, w, sx, gyx.data());
    detail::sobel_apply_raw(uy.data(), h, w, sy, gyy.data());
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

  FlowField<T> out(h, w);
  std::copy(ux.begin(), ux.end(), out.u_x.data());
  std::copy(uy.begin(), uy.end(), out.u_y.data());
  out.u_x.require_finite("tvl1_flow: u_x");
  out.u_y.require_finite("tvl1_flow: u_y");
  return out;
}

// Wait-free pixel-parallel version is possible, but the reference stays
// single-threaded: it is a correctness anchor, not a throughput path.

// Total variational energy. The TV term is the per-pixel Euclidean magnitude
// over all four flow-gradient channels (same Sobel gradients as the solver);
// the data term is the linearized brightness-constancy residual
// F2 - F1 + grad(F1) . u, the quantity the solver drives toward zero.
template <class T>
T tv_energy(const FlowField<T>& u, const Tensor<T>& f1, const Tensor<T>& f2, T lambda) {
  detail::check_nonempty(f1, "tv_energy");
  detail::check_same_shape(f1, f2, "tv_energy");
  if (f1.channels() != 1) throw std::invalid_argument("tv_energy: expected single-channel inputs");
  if (!u.u_x.same_spatial(f1) || !u.u_y.same_spatial(f1))
    throw std::invalid_argument("tv_energy: flow/image shape mismatch");
  if (!(lambda > T(0))) throw std::invalid_argument("tv_energy: lambda must be > 0");

  const int h = f1.height();
  const int w = f1.width();
  const std::size_t n = f1.plane_size();
  const Kernel2D<T> sx = default_sobel_x<T>();
  const Kernel2D<T> sy = default_sobel_y<T>();

  std::vector<T> gxx(n), gxy(n), gyx(n), gyy(n), f1x(n), f1y(n);
  detail::sobel_apply_raw(u.u_x.data(), h, w, sx, gxx.data());
  detail::sobel_apply_raw(u.u_x.data(), h, w, sy, gxy.data());
  detail::sobel_apply_raw(u.u_y.data(), h, w, sx, gyx.data());
  detail::sobel_apply_raw(u.u_y.data(), h, w, sy, gyy.data());
  detail::sobel_apply_raw(f1.data(), h, w, sx, f1x.data());
  detail::sobel_apply_raw(f1.data(), h, w, sy, f1y.data());

  T tv = T(0);
  T data = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    tv += std::sqrt(gxx[i] * gxx[i] + gxy[i] * gxy[i] + gyx[i] * gyx[i] + gyy[i] * gyy[i]);
    data += std::abs(f1x[i] * u.u_x[i] + f1y[i] * u.u_y[i] + f2[i] - f1[i]);
  }
  return tv + lambda * data;
}

}  // namespace repflow
