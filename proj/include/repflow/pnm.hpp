#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repflow/tensor.hpp"

namespace repflow {

// 8-bit image, interleaved row-major as stored in PGM (P5) / PPM (P6) files.
struct ImageU8 {
  int channels = 0;  // 1 (grey) or 3 (rgb)
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Binary PGM/PPM only, maxval up to 255.
ImageU8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImageU8& img);

// Writes bytes to a temp file in the target directory, then renames.
void write_file_atomic(const std::string& path, const void* bytes, std::size_t size);

// Rec. 601 luma for colour inputs; greys pass through. Values stay in [0,255].
template <class T>
Tensor<T> to_grey_tensor(const ImageU8& img) {
  Tensor<T> out(1, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        out(0, y, x) = static_cast<T>(img.at(y, x, 0));
      } else {
        const double luma = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                            0.114 * img.at(y, x, 2);
        out(0, y, x) = static_cast<T>(luma);
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> channel_tensor(const ImageU8& img, int c) {
  Tensor<T> out(1, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out(0, y, x) = static_cast<T>(img.at(y, x, c));
  return out;
}

}  // namespace repflow
