#include "egs/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace egs {

NeighborGraph build_knn(const Scene& scene, int k, long iteration) {
  const int n = static_cast<int>(scene.primitives.size());
  if (k < 1) throw UsageError("build_knn requires k >= 1");
  if (n < k + 1) {
    throw UsageError("build_knn: scene has " + std::to_string(n) +
                     " primitives but k = " + std::to_string(k) +
                     " requires at least " + std::to_string(k + 1));
  }
  NeighborGraph graph;
  graph.k = k;
  graph.built_at_iteration = iteration;
  graph.neighbor_indices.resize(n);

  using Entry = std::pair<double, int>;  // (squared distance, index)
  for (int i = 0; i < n; ++i) {
    // Max-heap of the k best candidates under lexicographic (distance, index).
    std::priority_queue<Entry> heap;
    const Vec3 ci = scene.primitives[i].center;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (scene.primitives[j].center - ci).squaredNorm();
      if (static_cast<int>(heap.size()) < k) {
        heap.emplace(d2, j);
      } else if (Entry(d2, j) < heap.top()) {
        heap.pop();
        heap.emplace(d2, j);
      }
    }
    std::vector<Entry> best;
    best.reserve(k);
    while (!heap.empty()) {
      best.push_back(heap.top());
      heap.pop();
    }
    std::sort(best.begin(), best.end());
    auto& out = graph.neighbor_indices[i];
    out.reserve(k);
    for (const Entry& e : best) out.push_back(e.second);
  }
  return graph;
}

double snri(const Scene& scene, const NeighborGraph& graph, int i) {
  const auto& nbrs = graph.neighbor_indices.at(i);
  if (nbrs.empty()) throw ContractError("snri: primitive has no neighbors");
  const Vec3 n = principal_normal(scene.primitives[i]).normal;
  const Vec3 ci = scene.primitives[i].center;
  const double eps = scene.epsilon_tangent;
  const double decay = scene.decay_rate;
  double acc = 0.0;
  for (int j : nbrs) {
    const double d = std::abs(n.dot(scene.primitives[j].center - ci));
    const double gap = std::max(0.0, eps - d);
    acc += std::exp(-decay * gap);
  }
  return acc / static_cast<double>(nbrs.size());
}

double neighborhood_entropy(const Scene& scene, const NeighborGraph& graph, int i) {
  const auto& nbrs = graph.neighbor_indices.at(i);
  double total = scene.primitives[i].opacity;
  for (int j : nbrs) total += scene.primitives[j].opacity;
  if (!(total > 1e-12)) {
    throw NumericError("neighborhood_entropy: empty neighborhood (opacity mass <= 1e-12)");
  }
  auto term = [&](double o) {
    if (o <= 0.0) return 0.0;
    const double p = o / total;
    return -p * std::log(p);
  };
  double h = term(scene.primitives[i].opacity);
  for (int j : nbrs) h += term(scene.primitives[j].opacity);
  return h;
}

double adaptive_threshold(const Scene& scene, const NeighborGraph& graph,
                          const ThresholdParams& params, int i) {
  const double s2 = scene.sigma_min * scene.sigma_min;
  const double base = kHalfLog2PiE + 0.5 * std::log(s2);
  const double raw = base + params.epsilon_stability + params.coupling_beta * snri(scene, graph, i);
  return std::max(params.eta_floor, raw);
}

std::vector<double> snri_all(const Scene& scene, const NeighborGraph& graph) {
  std::vector<double> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) out[i] = snri(scene, graph, static_cast<int>(i));
  return out;
}

std::vector<double> neighborhood_entropy_all(const Scene& scene, const NeighborGraph& graph) {
  std::vector<double> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    out[i] = neighborhood_entropy(scene, graph, static_cast<int>(i));
  }
  return out;
}

std::vector<double> adaptive_threshold_all(const Scene& scene, const NeighborGraph& graph,
                                           const ThresholdParams& params) {
  std::vector<double> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    out[i] = adaptive_threshold(scene, graph, params, static_cast<int>(i));
  }
  return out;
}

}  // namespace egs
