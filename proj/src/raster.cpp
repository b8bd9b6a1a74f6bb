#include "egs/raster.hpp"

#include <algorithm>

namespace egs {

double Raster::mean() const {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (double v : data) acc += v;
  return acc / static_cast<double>(data.size());
}

namespace {
inline int clamp_coord(int v, int n) { return std::clamp(v, 0, n - 1); }

void check_box_args(const Raster& src, int window) {
  if (src.channels != 1) throw ContractError("box_filter expects a single-channel raster");
  if (window < 1 || window % 2 == 0) throw ContractError("box_filter window must be odd and >= 1");
}
}  // namespace

Raster box_filter(const Raster& src, int window) {
  check_box_args(src, window);
  const int r = window / 2;
  const double inv = 1.0 / (static_cast<double>(window) * window);
  Raster out(src.width, src.height, 1);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = clamp_coord(y + dy, src.height);
        for (int dx = -r; dx <= r; ++dx) {
          acc += src.at(clamp_coord(x + dx, src.width), sy);
        }
      }
      out.at(x, y) = acc * inv;
    }
  }
  return out;
}

Raster box_filter_adjoint(const Raster& grad_out, int window) {
  check_box_args(grad_out, window);
  const int r = window / 2;
  const double inv = 1.0 / (static_cast<double>(window) * window);
  Raster grad_in(grad_out.width, grad_out.height, 1);
  for (int y = 0; y < grad_out.height; ++y) {
    for (int x = 0; x < grad_out.width; ++x) {
      const double g = grad_out.at(x, y) * inv;
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = clamp_coord(y + dy, grad_out.height);
        for (int dx = -r; dx <= r; ++dx) {
          grad_in.at(clamp_coord(x + dx, grad_out.width), sy) += g;
        }
      }
    }
  }
  return grad_in;
}

}  // namespace egs
