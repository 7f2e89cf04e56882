#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "repflow/rng.hpp"
#include "repflow/tensor.hpp"

namespace repflow::toy {

// One sinusoidal component with an integer number of cycles per period,
// so the texture is exactly periodic on the pixel grid.
struct SinusoidComponent {
  double amplitude = 0;
  double phase = 0;
  int cycles_x = 0;
  int cycles_y = 0;
};

// Band-limited random texture: a sum of a few sinusoids. Periodic in both
// axes, which makes an integer shift an exact circular shift of the grid.
class PeriodicTexture {
 public:
  PeriodicTexture(int width, int height, std::vector<SinusoidComponent> components)
      : width_(width), height_(height), components_(std::move(components)) {
    if (width_ < 1 || height_ < 1) throw std::invalid_argument("PeriodicTexture: empty grid");
    double total = 0;
    for (const auto& c : components_) total += std::abs(c.amplitude);
    if (total <= 0) throw std::invalid_argument("PeriodicTexture: zero amplitude");
    inv_total_amplitude_ = 1.0 / total;
  }

  int width() const { return width_; }
  int height() const { return height_; }

  // Continuous sample mapped into [0, 255].
  double value_at(double x, double y) const {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double s = 0;
    for (const auto& c : components_) {
      const double arg = two_pi * (c.cycles_x * x / width_ + c.cycles_y * y / height_) + c.phase;
      s += c.amplitude * std::cos(arg);
    }
    return 127.5 + 127.5 * s * inv_total_amplitude_;
  }

  // Renders the texture translated by (shift_x, shift_y) pixels: each output
  // pixel reads the texture at the pre-motion position. Shift arguments are
  // wrapped into [0, period) before evaluation, so integer shifts sample the
  // exact same grid points as the unshifted render and the result is a
  // bitwise circular shift of it.
  template <typename T = double>
  Tensor<T> render(double shift_x = 0, double shift_y = 0) const {
    Tensor<T> out(1, height_, width_);
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        const double sx = wrap(x - shift_x, width_);
        const double sy = wrap(y - shift_y, height_);
        out(0, y, x) = static_cast<T>(value_at(sx, sy));
      }
    }
    return out;
  }

 private:
  static double wrap(double v, int period) {
    double r = std::fmod(v, static_cast<double>(period));
    if (r < 0) r += period;
    return r;
  }

  int width_;
  int height_;
  std::vector<SinusoidComponent> components_;
  double inv_total_amplitude_;
};

// Random band-limited texture with `harmonics` components, each at most
// `max_cycles` cycles per axis and never the DC term.
inline PeriodicTexture random_texture(Rng& rng, int width, int height, int harmonics = 6,
                                      int max_cycles = 3) {
  if (harmonics < 1) throw std::invalid_argument("random_texture: need at least one harmonic");
  std::vector<SinusoidComponent> comps;
  comps.reserve(static_cast<std::size_t>(harmonics));
  while (static_cast<int>(comps.size()) < harmonics) {
    SinusoidComponent c;
    c.cycles_x = rng.uniform_int(-max_cycles, max_cycles);
    c.cycles_y = rng.uniform_int(-max_cycles, max_cycles);
    if (c.cycles_x == 0 && c.cycles_y == 0) continue;
    c.amplitude = rng.uniform(0.25, 1.0);
    c.phase = rng.uniform(0.0, 6.283185307179586);
    comps.push_back(c);
  }
  return PeriodicTexture(width, height, std::move(comps));
}

// Smooth one-cycle horizontal ramp; the simplest fixture whose +x shift the
// flow solver should recover.
inline PeriodicTexture ramp_texture(int width, int height) {
  return PeriodicTexture(width, height, {SinusoidComponent{1.0, -1.5707963267948966, 1, 0}});
}

}  // namespace repflow::toy
