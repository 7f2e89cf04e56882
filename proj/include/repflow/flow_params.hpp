#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "repflow/kernels.hpp"
#include "repflow/tensor.hpp"

namespace repflow {

// Which parameter groups the optimizer may touch.
struct LearnFlags {
  bool sobel = true;
  bool divergence = true;
  bool scalars = true;
};

// Learnable parameters of the unrolled flow solver. The scalar parameters are
// stored in log space so gradient steps can never drive them negative; tau()
// etc. return the exponentials. Zero is representable as log = -inf, which
// the degenerate-update tests rely on.
template <class T>
class FlowParams {
 public:
  Kernel2D<T> w_x = default_div_wx<T>();          // 1x2 divergence weights
  Kernel2D<T> w_y = default_div_wy<T>();          // 2x1 divergence weights
  Kernel2D<T> sobel_x = default_sobel_x<T>();     // 3x3 gradient kernels
  Kernel2D<T> sobel_y = default_sobel_y<T>();
  LearnFlags learn;

  T tau() const { return std::exp(log_tau_); }
  T lambda() const { return std::exp(log_lambda_); }
  T theta() const { return std::exp(log_theta_); }

  void set_tau(T v) { log_tau_ = to_log(v, "tau"); }
  void set_lambda(T v) { log_lambda_ = to_log(v, "lambda"); }
  void set_theta(T v) {
    if (!(v > T(0))) throw std::invalid_argument("FlowParams: theta must be > 0");
    log_theta_ = to_log(v, "theta");
  }

  T log_tau() const { return log_tau_; }
  T log_lambda() const { return log_lambda_; }
  T log_theta() const { return log_theta_; }
  void set_log_tau(T v) { log_tau_ = check_log(v, "log_tau"); }
  void set_log_lambda(T v) { log_lambda_ = check_log(v, "log_lambda"); }
  void set_log_theta(T v) {
    if (!std::isfinite(v)) throw std::invalid_argument("FlowParams: log_theta must be finite");
    log_theta_ = v;
  }

  void validate() const {
    if (w_x.rows() != 1 || w_x.cols() != 2)
      throw std::invalid_argument("FlowParams: w_x must be 1x2");
    if (w_y.rows() != 2 || w_y.cols() != 1)
      throw std::invalid_argument("FlowParams: w_y must be 2x1");
    if (sobel_x.rows() != 3 || sobel_x.cols() != 3 || sobel_y.rows() != 3 || sobel_y.cols() != 3)
      throw std::invalid_argument("FlowParams: sobel kernels must be 3x3");
    w_x.require_finite();
    w_y.require_finite();
    sobel_x.require_finite();
    sobel_y.require_finite();
    if (std::isnan(log_tau_) || log_tau_ == inf() || std::isnan(log_lambda_) ||
        log_lambda_ == inf() || !std::isfinite(log_theta_))
      throw std::invalid_argument("FlowParams: scalar parameters out of range");
  }

 private:
  static T inf() { return std::numeric_limits<T>::infinity(); }

  static T to_log(T v, const char* name) {
    if (std::isnan(v) || v == inf() || v < T(0))
      throw std::invalid_argument(std::string("FlowParams: ") + name +
                                  " must be finite and >= 0");
    return v == T(0) ? -inf() : std::log(v);
  }

  static T check_log(T v, const char* name) {
    if (std::isnan(v) || v == inf())
      throw std::invalid_argument(std::string("FlowParams: ") + name + " must not be NaN/+inf");
    return v;
  }

  // classical defaults 0.25, 0.15, 0.3, held as logs
  T log_tau_ = std::log(T(0.25));
  T log_lambda_ = std::log(T(0.15));
  T log_theta_ = std::log(T(0.3));
};

}  // namespace repflow
