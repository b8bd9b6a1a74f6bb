#include "egs/grads.hpp"

#include <cmath>

#include "egs/error.hpp"

namespace egs {

void SceneGrads::accumulate(const SceneGrads& other, double factor) {
  if (other.size() != size()) {
    throw ContractError("SceneGrads::accumulate: size mismatch");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    center[i] += factor * other.center[i];
    scale[i] += factor * other.scale[i];
    rotation[i] += factor * other.rotation[i];
    opacity[i] += factor * other.opacity[i];
    color[i] += factor * other.color[i];
  }
}

double SceneGrads::component(std::size_t prim, int param) const {
  if (param < 3) return center[prim][param];
  if (param < 6) return scale[prim][param - 3];
  if (param < 10) return rotation[prim][param - 6];
  if (param == 10) return opacity[prim];
  return color[prim][param - 11];
}

double SceneGrads::max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (int p = 0; p < kParamsPerPrimitive; ++p) {
      m = std::max(m, std::abs(component(i, p)));
    }
  }
  return m;
}

bool SceneGrads::all_finite() const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (int p = 0; p < kParamsPerPrimitive; ++p) {
      if (!std::isfinite(component(i, p))) return false;
    }
  }
  return true;
}

double scene_parameter(const Scene& scene, std::size_t prim, int param) {
  const GaussianPrimitive& g = scene.primitives[prim];
  if (param < 3) return g.center[param];
  if (param < 6) return g.scale[param - 3];
  if (param < 10) return g.rotation[param - 6];
  if (param == 10) return g.opacity;
  return g.color[param - 11];
}

void set_scene_parameter(Scene* scene, std::size_t prim, int param, double value) {
  GaussianPrimitive& g = scene->primitives[prim];
  if (param < 3) {
    g.center[param] = value;
  } else if (param < 6) {
    g.scale[param - 3] = value;
  } else if (param < 10) {
    g.rotation[param - 6] = value;
  } else if (param == 10) {
    g.opacity = value;
  } else {
    g.color[param - 11] = value;
  }
}

}  // namespace egs
