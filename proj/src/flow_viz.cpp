#include "repflow/flow_viz.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "repflow/errors.hpp"

namespace repflow {

namespace {

// Classic 55-entry colour wheel: six interpolated arcs RY-YG-GC-CB-BM-MR.
struct Wheel {
  std::vector<std::array<double, 3>> colors;

  Wheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    colors.reserve(RY + YG + GC + CB + BM + MR);
    auto arc = [&](int n, std::array<double, 3> from, std::array<double, 3> to) {
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / n;
        colors.push_back({from[0] + (to[0] - from[0]) * t, from[1] + (to[1] - from[1]) * t,
                          from[2] + (to[2] - from[2]) * t});
      }
    };
    arc(RY, {255, 0, 0}, {255, 255, 0});
    arc(YG, {255, 255, 0}, {0, 255, 0});
    arc(GC, {0, 255, 0}, {0, 255, 255});
    arc(CB, {0, 255, 255}, {0, 0, 255});
    arc(BM, {0, 0, 255}, {255, 0, 255});
    arc(MR, {255, 0, 255}, {255, 0, 0});
  }
};

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

}  // namespace

ImageU8 flow_to_color(const FloData& flow) {
  if (flow.width < 1 || flow.height < 1) throw IoError("flow_to_color: empty flow");
  static const Wheel wheel;
  const int ncols = static_cast<int>(wheel.colors.size());

  std::vector<double> mags;
  mags.reserve(static_cast<std::size_t>(flow.width) * flow.height);
  for (std::size_t i = 0; i < flow.uv.size(); i += 2) {
    const double u = flow.uv[i], v = flow.uv[i + 1];
    mags.push_back(std::sqrt(u * u + v * v));
  }
  const double maxrad = std::max(percentile(mags, 0.99), 1e-10);

  ImageU8 img;
  img.channels = 3;
  img.width = flow.width;
  img.height = flow.height;
  img.data.resize(static_cast<std::size_t>(flow.width) * flow.height * 3);

  for (std::size_t i = 0, px = 0; i < flow.uv.size(); i += 2, ++px) {
    const double u = flow.uv[i], v = flow.uv[i + 1];
    const double rad = std::min(std::sqrt(u * u + v * v) / maxrad, 1.0);
    const double angle = std::atan2(-v, -u) / 3.14159265358979323846;  // [-1, 1]
    const double fk = (angle + 1.0) / 2.0 * (ncols - 1);
    const int k0 = static_cast<int>(fk) % ncols;
    const int k1 = (k0 + 1) % ncols;
    const double f = fk - std::floor(fk);
    for (int c = 0; c < 3; ++c) {
      double col = (wheel.colors[static_cast<std::size_t>(k0)][static_cast<std::size_t>(c)] +
                    f * (wheel.colors[static_cast<std::size_t>(k1)][static_cast<std::size_t>(c)] -
                         wheel.colors[static_cast<std::size_t>(k0)][static_cast<std::size_t>(c)])) /
                   255.0;
      col = 1.0 - rad * (1.0 - col);  // fade to white at zero motion
      img.data[px * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::lround(255.0 * col));
    }
  }
  return img;
}

}  // namespace repflow
