#pragma once

#include <vector>

#include "egs/core.hpp"

namespace egs {

// Fixed k-nearest-neighbor topology over primitive centers.
struct NeighborGraph {
  int k = 0;
  std::vector<std::vector<int>> neighbor_indices;  // per primitive, ascending by (distance, index)
  long built_at_iteration = 0;
  bool frozen = false;
};

// Brute-force exact k-NN by center distance; ties broken by lower index.
// Throws UsageError when the scene has fewer than k + 1 primitives.
NeighborGraph build_knn(const Scene& scene, int k, long iteration = 0);

// Surface-normal redundancy index for primitive i:
//   (1/K) * sum_j exp(-decay * max(0, epsilon - |n_i . (c_j - c_i)|)).
// 1.0 when every neighbor is displaced along the normal by >= epsilon;
// exp(-decay * epsilon) when all neighbors lie in the tangent plane.
double snri(const Scene& scene, const NeighborGraph& graph, int i);

// Discrete Shannon entropy (nats) of the opacity distribution over the
// (K+1)-member set {i} + neighbors. Throws NumericError when the total
// opacity mass is at or below 1e-12.
double neighborhood_entropy(const Scene& scene, const NeighborGraph& graph, int i);

struct ThresholdParams {
  double epsilon_stability = 0.01;
  double coupling_beta = 0.0;  // default -sigma_min^2
  double eta_floor = 0.0;

  static ThresholdParams defaults(double sigma_min) {
    ThresholdParams t;
    t.coupling_beta = -sigma_min * sigma_min;
    return t;
  }
};

// Adaptive per-primitive entropy budget:
//   max(eta_floor, 0.5*ln(2*pi*e*sigma_min^2) + epsilon_stability + beta * snri_i).
double adaptive_threshold(const Scene& scene, const NeighborGraph& graph,
                          const ThresholdParams& params, int i);

// Batch helpers (same math as the per-index calls, ordered loops).
std::vector<double> snri_all(const Scene& scene, const NeighborGraph& graph);
std::vector<double> neighborhood_entropy_all(const Scene& scene, const NeighborGraph& graph);
std::vector<double> adaptive_threshold_all(const Scene& scene, const NeighborGraph& graph,
                                           const ThresholdParams& params);

}  // namespace egs
