#include "egs/image_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace egs {

double shannon_entropy_bits(const std::vector<int>& counts, int total) {
  if (total <= 0) throw ContractError("shannon_entropy_bits: total must be positive");
  double acc = 0.0;
  for (int c : counts) {
    if (c <= 0) continue;
    const double p = static_cast<double>(c) / total;
    acc -= p * std::log2(p);
  }
  return acc;
}

Raster local_entropy_map(const GrayImage& image, int window) {
  if (image.width <= 0 || image.height <= 0) {
    throw UsageError("local_entropy_map: empty image");
  }
  if (window < 3 || window % 2 == 0 || window > std::min(image.width, image.height)) {
    throw UsageError("local_entropy_map: window must be odd, >= 3, and <= min(width, height); got " +
                     std::to_string(window));
  }
  const int r = window / 2;
  const int total = window * window;
  // log2 lookup for counts 0..total keeps the per-pixel loop cheap.
  std::vector<double> log2_table(total + 1, 0.0);
  for (int c = 1; c <= total; ++c) log2_table[c] = std::log2(static_cast<double>(c));
  const double log2_total = log2_table[total];

  Raster out(image.width, image.height, 1);
  std::vector<int> hist(256, 0);
  std::vector<int> touched;
  touched.reserve(total);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      touched.clear();
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = std::clamp(y + dy, 0, image.height - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = std::clamp(x + dx, 0, image.width - 1);
          const int v = image.at(sx, sy);
          if (hist[v]++ == 0) touched.push_back(v);
        }
      }
      // H = log2(n) - (1/n) * sum c*log2(c)
      double acc = 0.0;
      for (int v : touched) {
        acc += hist[v] * log2_table[hist[v]];
        hist[v] = 0;
      }
      out.at(x, y) = log2_total - acc / total;
    }
  }
  return out;
}

namespace {

// Nearest-rank percentile over a copy of the raster values.
void percentile_bounds(const Raster& raw, double* lo, double* hi) {
  std::vector<double> sorted(raw.data);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const auto rank = [&](double q) {
    return sorted[static_cast<std::size_t>(std::llround(q * static_cast<double>(n - 1)))];
  };
  *lo = rank(0.01);
  *hi = rank(0.99);
}

}  // namespace

EntropyPyramid build_pyramid(const GrayImage& image, int n_levels, double beta) {
  if (n_levels < 1 || n_levels > 5) {
    throw UsageError("build_pyramid: n_levels must lie in [1, 5]");
  }
  if (!(beta > 0.0)) throw UsageError("build_pyramid: beta must be positive");

  EntropyPyramid pyr;
  pyr.temperature = beta;
  pyr.levels.resize(n_levels);
  for (int l = 1; l <= n_levels; ++l) {
    auto& level = pyr.levels[l - 1];
    level.scale = l;
    level.window = (1 << l) + 1;
    level.raw = local_entropy_map(image, level.window);
    double lo = 0.0, hi = 0.0;
    percentile_bounds(level.raw, &lo, &hi);
    level.normalized = Raster(image.width, image.height, 1);
    if (hi - lo <= 1e-12) {
      // Degenerate level: constant after clamping, maps to zero.
    } else {
      const double inv = 1.0 / (hi - lo);
      for (std::size_t i = 0; i < level.raw.data.size(); ++i) {
        const double v = std::clamp(level.raw.data[i], lo, hi);
        level.normalized.data[i] = (v - lo) * inv;
      }
    }
    level.weight = Raster(image.width, image.height, 1);
  }

  // Stable per-pixel softmax of beta * normalized across levels.
  const std::size_t npx = static_cast<std::size_t>(image.width) * image.height;
  std::vector<double> vals(n_levels);
  for (std::size_t i = 0; i < npx; ++i) {
    double vmax = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < n_levels; ++l) {
      vals[l] = beta * pyr.levels[l].normalized.data[i];
      vmax = std::max(vmax, vals[l]);
    }
    double z = 0.0;
    for (int l = 0; l < n_levels; ++l) {
      vals[l] = std::exp(vals[l] - vmax);
      z += vals[l];
    }
    for (int l = 0; l < n_levels; ++l) pyr.levels[l].weight.data[i] = vals[l] / z;
  }
  return pyr;
}

ConcentrationStats concentration_stats(const EntropyPyramid& pyramid, double threshold) {
  if (pyramid.levels.empty()) throw ContractError("concentration_stats: empty pyramid");
  const Raster& first = pyramid.levels.front().weight;
  ConcentrationStats out;
  out.concentration = Raster(first.width, first.height, 1);
  std::size_t above_all = 0, above_tex = 0;
  const std::size_t npx = out.concentration.data.size();
  for (std::size_t i = 0; i < npx; ++i) {
    double c = 0.0;
    double raw_max = 0.0;
    for (const auto& level : pyramid.levels) {
      c = std::max(c, level.weight.data[i]);
      raw_max = std::max(raw_max, level.raw.data[i]);
    }
    out.concentration.data[i] = c;
    const bool textured = raw_max > 1e-12;
    if (textured) ++out.n_textured;
    if (c > threshold) {
      ++above_all;
      if (textured) ++above_tex;
    }
  }
  out.fraction_all = npx ? static_cast<double>(above_all) / static_cast<double>(npx) : 0.0;
  out.fraction_textured =
      out.n_textured ? static_cast<double>(above_tex) / static_cast<double>(out.n_textured) : 0.0;
  return out;
}

PrimitiveImageEntropy primitive_image_entropy(const Scene& scene, const Camera& camera,
                                              const Raster& entropy_map) {
  if (entropy_map.channels != 1 || entropy_map.width != camera.resolution.x() ||
      entropy_map.height != camera.resolution.y()) {
    throw ContractError("primitive_image_entropy: map must match camera resolution");
  }
  const double global_mean = entropy_map.mean();
  PrimitiveImageEntropy out;
  out.value.assign(scene.size(), global_mean);
  out.status.assign(scene.size(), FootprintStatus::kOk);

  for (std::size_t i = 0; i < scene.size(); ++i) {
    const GaussianPrimitive& p = scene.primitives[i];
    Projection2D proj;
    try {
      proj = project_covariance(p, camera);
    } catch (const NumericError&) {
      out.status[i] = FootprintStatus::kBehindCamera;
      continue;
    }
    // 3-sigma footprint bound from the largest 2D eigenvalue.
    const Mat2& c2 = proj.cov;
    const double tr = c2(0, 0) + c2(1, 1);
    const double det = c2(0, 0) * c2(1, 1) - c2(0, 1) * c2(1, 0);
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    const double lam_max = 0.5 * tr + disc;
    const double radius = 3.0 * std::sqrt(std::max(lam_max, 0.0));
    const int x0 = std::max(0, static_cast<int>(std::floor(proj.center_px.x() - radius)));
    const int x1 = std::min(entropy_map.width - 1,
                            static_cast<int>(std::ceil(proj.center_px.x() + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(proj.center_px.y() - radius)));
    const int y1 = std::min(entropy_map.height - 1,
                            static_cast<int>(std::ceil(proj.center_px.y() + radius)));
    Mat2 inv;
    const double idet = det > 1e-300 ? 1.0 / det : 0.0;
    inv << c2(1, 1) * idet, -c2(0, 1) * idet, -c2(1, 0) * idet, c2(0, 0) * idet;
    double mass = 0.0, acc = 0.0;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 d(x - proj.center_px.x(), y - proj.center_px.y());
        const double m2 = d.dot(inv * d);
        if (m2 > 9.0) continue;
        const double a = p.opacity * std::exp(-0.5 * m2);
        mass += a;
        acc += a * entropy_map.at(x, y);
      }
    }
    if (mass < 1e-9) {
      out.status[i] = FootprintStatus::kLowMass;
      continue;  // keeps the global mean fallback
    }
    out.value[i] = acc / mass;
  }
  return out;
}

std::vector<double> entropy_guided_weights(const std::vector<double>& entropies) {
  if (entropies.empty()) return {};
  const auto [mn, mx] = std::minmax_element(entropies.begin(), entropies.end());
  std::vector<double> w(entropies.size(), 1.0);
  const double range = *mx - *mn;
  if (range < 1e-12) return w;
  const double inv = 1.0 / range;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    w[i] = 1.0 - (entropies[i] - *mn) * inv;
  }
  return w;
}

}  // namespace egs
