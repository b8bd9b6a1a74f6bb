#pragma once

#include <cstddef>
#include <vector>

#include "egs/core.hpp"

namespace egs {

// Per-primitive parameter gradients, addressed either by field or by a flat
// 14-component layout per primitive:
//   [0..2] center, [3..5] scale, [6..9] rotation (w,x,y,z), [10] opacity,
//   [11..13] color.
struct SceneGrads {
  std::vector<Vec3> center;
  std::vector<Vec3> scale;
  std::vector<Vec4> rotation;
  std::vector<double> opacity;
  std::vector<Vec3> color;

  SceneGrads() = default;
  explicit SceneGrads(std::size_t n)
      : center(n, Vec3::Zero()),
        scale(n, Vec3::Zero()),
        rotation(n, Vec4::Zero()),
        opacity(n, 0.0),
        color(n, Vec3::Zero()) {}

  std::size_t size() const { return opacity.size(); }
  static constexpr int kParamsPerPrimitive = 14;

  void accumulate(const SceneGrads& other, double factor = 1.0);
  double component(std::size_t prim, int param) const;
  double max_abs() const;
  bool all_finite() const;
};

// Reads or perturbs the same flat parameter layout on a scene (used by the
// finite-difference checker).
double scene_parameter(const Scene& scene, std::size_t prim, int param);
void set_scene_parameter(Scene* scene, std::size_t prim, int param, double value);

}  // namespace egs
