#pragma once

#include "repflow/flo.hpp"
#include "repflow/pnm.hpp"

namespace repflow {

// Renders a flow field with the standard flow colour wheel: hue encodes
// direction, saturation encodes magnitude. Magnitudes are normalized to the
// 99th percentile so single-pixel outliers do not wash out the image.
// Zero motion renders white.
ImageU8 flow_to_color(const FloData& flow);

}  // namespace repflow
