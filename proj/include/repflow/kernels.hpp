#pragma once

#include "repflow/tensor.hpp"

namespace repflow {

// Default derivative kernels, written for the global correlation convention.
//
// The Sobel pair is stored pre-flipped and scaled by 1/8 so that correlating
// with it estimates a unit-scale derivative (exact on linear ramps, +x right,
// +y down). The raw matrices are conventionally printed in convolution
// orientation; applied unflipped they would compute -8 times the derivative,
// which inverts the recovered flow's sign and shrinks it by 8.
template <class T>
Kernel2D<T> default_sobel_x() {
  const T e = T(0.125), t = T(0.25), z = T(0);
  return Kernel2D<T>(3, 3, {-e, z, e, -t, z, t, -e, z, e});
}

template <class T>
Kernel2D<T> default_sobel_y() {
  const T e = T(0.125), t = T(0.25), z = T(0);
  return Kernel2D<T>(3, 3, {-e, -t, -e, z, z, z, e, t, e});
}

// Divergence weights: backward difference once the field is zero-padded on
// the first column (x) or first row (y).
template <class T>
Kernel2D<T> default_div_wx() {
  return Kernel2D<T>(1, 2, {T(-1), T(1)});
}

template <class T>
Kernel2D<T> default_div_wy() {
  return Kernel2D<T>(2, 1, {T(-1), T(1)});
}

}  // namespace repflow
