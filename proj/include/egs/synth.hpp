#pragma once

#include <cstdint>
#include <string>

#include "egs/core.hpp"
#include "egs/raster.hpp"

namespace egs {

// Thin disks stacked along their shared normal at the given spacing:
// every neighbor displacement is purely normal, so the redundancy index is
// exactly 1 whenever spacing >= epsilon_tangent.
Scene make_stacked_scene(int n, double spacing, std::uint64_t seed);

// Thin disks scattered in the z = 0 plane: every neighbor displacement is
// purely tangential, so the redundancy index is exactly
// exp(-decay_rate * epsilon_tangent).
Scene make_tangential_scene(int n, std::uint64_t seed);

// Disks uniformly scattered over [-extent, extent]^2 with z ~ N(0, sigma^2)
// off-plane noise, opacities U[0.3, 0.7].
Scene make_noisy_plane(int n, double noise_sigma, std::uint64_t seed, double extent = 2.0);

// Disks on a sphere with radial N(0, sigma^2) noise, oriented so the thin
// axis points radially.
Scene make_sphere(int n, double radius, double noise_sigma, std::uint64_t seed);

// Half flat (constant 128), half textured (2x2-pixel {0, 255} checker),
// split down the middle. Width and height must be >= 64 and width even.
GrayImage make_composite_image(int width, int height);

// Sensor noise pipeline applied per pixel in row-major order:
// signal-dependent shot noise, additive Gaussian read noise, half-normal
// dark offset, impulse (salt/pepper) replacement, then clamp to [0, 255].
struct NoisePreset {
  std::string name;
  double shot_scale = 0.0;     // stddev multiplier on sqrt(intensity)
  double gaussian_std = 0.0;   // additive read noise stddev
  double dark_scale = 0.0;     // half-normal dark-offset scale
  double impulse_prob = 0.0;   // per-pixel replacement probability
};

// Known presets: none, light, medium, heavy, realistic_sensor.
NoisePreset noise_preset(const std::string& name);

GrayImage add_sensor_noise(const GrayImage& image, const NoisePreset& preset,
                           std::uint64_t seed);

// Analytic surface a synthetic scene was sampled from.
struct SurfaceDescriptor {
  enum class Kind { kPlane, kSphere } kind = Kind::kPlane;
  Vec3 normal = Vec3(0, 0, 1);  // plane: unit normal; distance = normal.c - offset
  double offset = 0.0;
  Vec3 center = Vec3::Zero();   // sphere
  double radius = 1.0;

  static SurfaceDescriptor plane(const Vec3& normal, double offset);
  static SurfaceDescriptor sphere(const Vec3& center, double radius);
};

// RMS distance to the surface over opacity-dominant primitives
// (opacity >= threshold). Throws NumericError when none qualify.
double surface_rms(const Scene& scene, const SurfaceDescriptor& surface,
                   double opacity_threshold = 0.5);

// Symmetric chamfer distance between primitive center sets:
// 0.5 * (mean_a min_b |a-b| + mean_b min_a |b-a|).
double chamfer_distance(const Scene& a, const Scene& b);

// Camera at `eye` looking at `target` (+z forward, +x right, +y down in
// camera space), square pixels, principal point at the image center.
Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up_hint,
                          double focal_px, int width, int height);

}  // namespace egs
