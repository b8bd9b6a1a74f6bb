#pragma once

#include <vector>

#include "egs/core.hpp"
#include "egs/raster.hpp"

namespace egs {

// Shannon entropy in bits of a count histogram with the given total.
double shannon_entropy_bits(const std::vector<int>& counts, int total);

// Per-pixel local entropy (bits) of the 256-bin intensity histogram over a
// window x window neighborhood with replicate edge padding. The window must
// be odd, >= 3, and <= min(width, height).
Raster local_entropy_map(const GrayImage& image, int window);

// Multi-scale entropy pyramid with competitive softmax weighting.
struct EntropyPyramid {
  struct Level {
    int scale = 1;        // level index l
    int window = 3;       // 2^l + 1
    Raster raw;           // bits
    Raster normalized;    // percentile-normalized to [0, 1]
    Raster weight;        // softmax weight, sums to 1 across levels per pixel
  };
  std::vector<Level> levels;
  double temperature = 6.0;  // softmax beta
};

// Builds levels l = 1..n_levels with windows 2^l + 1. Each raw map is
// clamped to its [1st, 99th] percentile range and affinely mapped to [0, 1]
// (a degenerate range maps to 0), then weights are the per-pixel softmax of
// beta * normalized across levels. n_levels in [1, 5], beta > 0.
EntropyPyramid build_pyramid(const GrayImage& image, int n_levels, double beta);

struct ConcentrationStats {
  Raster concentration;      // per-pixel max_l W_l
  double fraction_all = 0.0;       // fraction over all pixels with C > threshold
  double fraction_textured = 0.0;  // fraction over pixels with any nonzero raw entropy
  std::size_t n_textured = 0;
};
ConcentrationStats concentration_stats(const EntropyPyramid& pyramid, double threshold = 0.6);

enum class FootprintStatus { kOk, kLowMass, kBehindCamera };

struct PrimitiveImageEntropy {
  std::vector<double> value;            // per-primitive footprint-weighted entropy
  std::vector<FootprintStatus> status;  // sampling diagnostics
};

// Footprint-weighted mean entropy per primitive over the 3-sigma projected
// footprint: E_k = sum(alpha_k * E) / sum(alpha_k). Primitives behind the
// camera are excluded; footprints with mass below 1e-9 receive the map's
// global mean. The map must match the camera resolution.
PrimitiveImageEntropy primitive_image_entropy(const Scene& scene, const Camera& camera,
                                              const Raster& entropy_map);

// Inverted min-max weights w_k = 1 - (E_k - min) / (max - min); a degenerate
// range (max - min < 1e-12) yields all ones.
std::vector<double> entropy_guided_weights(const std::vector<double>& entropies);

}  // namespace egs
