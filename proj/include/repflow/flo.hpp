#pragma once

#include <string>
#include <vector>

#include "repflow/tvl1.hpp"

namespace repflow {

// Flow interchange file: float magic 202021.25, int32 width, int32 height,
// then row-major interleaved (u, v) float32 pairs. All little-endian.
constexpr float kFloMagic = 202021.25f;

struct FloData {
  int width = 0;
  int height = 0;
  std::vector<float> uv;  // 2 * width * height, interleaved (u, v)
};

void write_flo(const std::string& path, const FloData& flow);
FloData read_flo(const std::string& path);

FloData to_flo(const FlowField<float>& field);
FloData to_flo(const FlowField<double>& field);
FlowField<float> from_flo(const FloData& flow);

}  // namespace repflow
