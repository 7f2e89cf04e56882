#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace repflow {

// Real-width policy. float is the fast path; double is the "wide" path used
// by the reference oracle and all gradient checking.
template <class T>
struct RealTraits;

template <>
struct RealTraits<float> {
  static constexpr float div_eps = 1e-7f;
  static constexpr const char* name = "float32";
};

template <>
struct RealTraits<double> {
  static constexpr double div_eps = 1e-12;
  static constexpr const char* name = "float64";
};

enum class PadMode : std::uint8_t { Zero, Replicate };

struct PaddingSpec {
  PadMode mode = PadMode::Zero;
  int left = 0;
  int right = 0;
  int top = 0;
  int bottom = 0;

  static PaddingSpec none() { return {}; }
  static PaddingSpec zero(int amount) {
    return {PadMode::Zero, amount, amount, amount, amount};
  }
  static PaddingSpec replicate(int amount) {
    return {PadMode::Replicate, amount, amount, amount, amount};
  }

  void validate() const {
    if (left < 0 || right < 0 || top < 0 || bottom < 0)
      throw std::invalid_argument("padding amounts must be >= 0");
  }
};

// Dense rank-3 tensor, row-major (channel, row, column).
template <class T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height < 1 || width < 1)
      throw std::invalid_argument("Tensor: dims must be >= 1, got " +
                                  shape_string(channels, height, width));
    data_.assign(static_cast<std::size_t>(channels) * height * width, T(0));
  }

  static Tensor full(int channels, int height, int width, T value) {
    Tensor t(channels, height, width);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  T operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * height_ * width_; }
  const T* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * height_ * width_;
  }

  bool same_shape(const Tensor& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }
  bool same_spatial(const Tensor& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  std::string shape_string() const { return shape_string(channels_, height_, width_); }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const char* what) const {
    if (!all_finite())
      throw std::invalid_argument(std::string(what) + ": non-finite values");
  }

  // Extracts channel c as a 1-channel tensor.
  Tensor slice_channel(int c) const {
    check_channel(c);
    Tensor out(1, height_, width_);
    std::copy(channel(c), channel(c) + plane_size(), out.data());
    return out;
  }

  void set_channel(int c, const Tensor& src) {
    check_channel(c);
    if (src.channels() != 1 || !src.same_spatial(*this))
      throw std::invalid_argument("set_channel: shape mismatch");
    std::copy(src.data(), src.data() + plane_size(), channel(c));
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.channels_ == b.channels_ && a.height_ == b.height_ &&
           a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  static std::string shape_string(int c, int h, int w) {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
  void check_channel(int c) const {
    if (c < 0 || c >= channels_) throw std::invalid_argument("channel index out of range");
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// Small dense 2D kernel.
template <class T>
class Kernel2D {
 public:
  Kernel2D() = default;
  Kernel2D(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("Kernel2D: dims must be >= 1");
    weights_.assign(static_cast<std::size_t>(rows) * cols, T(0));
  }
  Kernel2D(int rows, int cols, std::initializer_list<T> w) : Kernel2D(rows, cols) {
    if (w.size() != weights_.size())
      throw std::invalid_argument("Kernel2D: weight count mismatch");
    std::copy(w.begin(), w.end(), weights_.begin());
    require_finite();
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  T* data() { return weights_.data(); }
  const T* data() const { return weights_.data(); }
  T& operator()(int r, int c) { return weights_[static_cast<std::size_t>(r) * cols_ + c]; }
  T operator()(int r, int c) const { return weights_[static_cast<std::size_t>(r) * cols_ + c]; }
  T& operator[](std::size_t i) { return weights_[i]; }
  T operator[](std::size_t i) const { return weights_[i]; }

  bool same_shape(const Kernel2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void require_finite() const {
    for (T v : weights_)
      if (!std::isfinite(v)) throw std::invalid_argument("Kernel2D: non-finite weights");
  }

  friend bool operator==(const Kernel2D& a, const Kernel2D& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.weights_ == b.weights_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> weights_;
};

namespace detail {

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
}

template <class T>
void check_nonempty(const Tensor<T>& a, const char* op) {
  if (a.empty()) throw std::invalid_argument(std::string(op) + ": empty tensor");
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class T, class F>
Tensor<T> elementwise_binary(const Tensor<T>& a, const Tensor<T>& b, F f, const char* op) {
  detail::check_nonempty(a, op);
  detail::check_same_shape(a, b, op);
  Tensor<T> out(a.channels(), a.height(), a.width());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, [](T x, T y) { return x + y; }, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(a, b, [](T x, T y) { return x * y; }, "mul");
}

// Division with the flow-layer epsilon policy: denominator offset by div_eps
// so flat regions stay finite.
template <class T>
Tensor<T> div_guarded(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary(
      a, b, [](T x, T y) { return x / (y + RealTraits<T>::div_eps); }, "div_guarded");
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  detail::check_nonempty(a, "add_scalar");
  Tensor<T> out(a.channels(), a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s;
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  detail::check_nonempty(a, "scale");
  Tensor<T> out(a.channels(), a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  detail::check_nonempty(a, "clamp");
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  Tensor<T> out(a.channels(), a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(hi, std::max(lo, a[i]));
  return out;
}

// ---- reductions ------------------------------------------------------------
// Summation is always plain left-to-right over the row-major index, so results
// are bit-reproducible run to run.

enum class ReduceOp : std::uint8_t { Sum, Mean, Min, Max };

template <class T>
T reduce_range(ReduceOp op, const T* p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("reduce: empty range");
  switch (op) {
    case ReduceOp::Sum:
    case ReduceOp::Mean: {
      T acc = T(0);
      for (std::size_t i = 0; i < n; ++i) acc += p[i];
      return op == ReduceOp::Sum ? acc : acc / static_cast<T>(n);
    }
    case ReduceOp::Min: {
      T acc = p[0];
      for (std::size_t i = 1; i < n; ++i) acc = std::min(acc, p[i]);
      return acc;
    }
    case ReduceOp::Max: {
      T acc = p[0];
      for (std::size_t i = 1; i < n; ++i) acc = std::max(acc, p[i]);
      return acc;
    }
  }
  throw std::logic_error("reduce: bad op");
}

template <class T>
T reduce(ReduceOp op, const Tensor<T>& x) {
  detail::check_nonempty(x, "reduce");
  return reduce_range(op, x.data(), x.size());
}

template <class T>
std::vector<T> reduce_per_channel(ReduceOp op, const Tensor<T>& x) {
  detail::check_nonempty(x, "reduce_per_channel");
  std::vector<T> out(static_cast<std::size_t>(x.channels()));
  for (int c = 0; c < x.channels(); ++c)
    out[static_cast<std::size_t>(c)] = reduce_range(op, x.channel(c), x.plane_size());
  return out;
}

}  // namespace repflow
