#pragma once

#include <cstdint>
#include <vector>

#include "egs/core.hpp"

namespace egs {

// A ray with an integration window along its direction.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3(0, 0, 1);  // unit norm within 1e-12
  double t_near = 0.0;
  double t_far = 1.0;

  Ray() = default;
  Ray(const Vec3& o, const Vec3& d, double near, double far);
};

// 1D marginal of a primitive along a ray: mean d.(c - o) and variance d^T Sigma d.
struct RayGaussian {
  double mean = 0.0;
  double variance = 0.0;
};
RayGaussian project_to_ray(const GaussianPrimitive& p, const Ray& ray);

// Mixture opacity along the ray:
//   alpha(t) = sum_i weight_i * opacity_i * N(t | mean_i, variance_i).
double opacity_field(const Scene& scene, const Ray& ray, double t);

// Sampled opacity profile with its trapezoid L1 normalization.
struct RayProfile {
  std::vector<double> ts;
  std::vector<double> alpha;
  double normalization = 0.0;  // trapezoid integral of alpha over the window
};
RayProfile ray_profile(const Scene& scene, const Ray& ray, int n_samples);

// Differential entropy -int a~ ln a~ dt of the L1-normalized opacity profile,
// via trapezoid quadrature at n_samples uniform points (n_samples >= 16).
// Throws NumericError when the profile normalization is below 1e-12.
double ray_entropy(const Scene& scene, const Ray& ray, int n_samples);

// Convenience: window [min mean - 6*sigma_max, max mean + 6*sigma_max] over
// the scene's per-primitive ray marginals.
Ray make_ray_with_default_window(const Scene& scene, const Vec3& origin, const Vec3& direction);

struct RayContribution {
  int index = -1;
  double depth = 0.0;  // along-ray mean
  double omega = 0.0;  // opacity * density at the closest ray point
};

// Contributing primitives (density at the closest ray point above 1e-6 and
// closest point inside the window), sorted by depth with index tie-break.
std::vector<RayContribution> per_ray_depths(const Scene& scene, const Ray& ray);

// Per-iteration operation-count models for the two entropy paths.
std::uint64_t ray_cost_model(std::uint64_t n_rays, std::uint64_t n_samples,
                             std::uint64_t gaussians_per_sample);
std::uint64_t neighborhood_cost_model(std::uint64_t n_primitives, std::uint64_t k);

// A ray cast through a pixel center, tagged with its pixel coordinates.
struct PixelRay {
  Ray ray;
  int px = 0;
  int py = 0;
};

constexpr double kCameraRayFar = 1e9;

// Rays through every stride-th pixel center (offset stride/2 in each axis),
// with window [kNearPlane, kCameraRayFar].
std::vector<PixelRay> make_camera_rays(const Camera& camera, int stride);

}  // namespace egs
