#pragma once

#include <cstdint>
#include <vector>

#include "egs/error.hpp"

namespace egs {

// Row-major, channel-interleaved floating-point raster.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Raster() = default;
  Raster(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Raster& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  double mean() const;
};

// 8-bit grayscale image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// k x k normalized box filter with replicate padding (single-channel input).
Raster box_filter(const Raster& src, int window);

// Exact adjoint of box_filter under the same padding, for gradient flow
// through smoothed rasters.
Raster box_filter_adjoint(const Raster& grad_out, int window);

}  // namespace egs
