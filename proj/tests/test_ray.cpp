#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "egs/core.hpp"
#include "egs/ray.hpp"
#include "egs/synth.hpp"

using namespace egs;

namespace {

Scene single_gaussian(const Vec3& center, double sigma, double opacity = 1.0) {
  GaussianPrimitive p;
  p.center = center;
  p.scale = Vec3(sigma, sigma, sigma);
  p.opacity = opacity;
  std::vector<GaussianPrimitive> prims = {p};
  return Scene(std::move(prims), std::min(sigma, 0.01));
}

const Ray kZRay(Vec3::Zero(), Vec3(0, 0, 1), -6.0, 26.0);

}  // namespace

TEST_CASE("opacity_field: peak of a unit-weight Gaussian is the normal density") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    const Scene scene = single_gaussian(Vec3(0, 0, 10), sigma);
    const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 0.0, 20.0);
    const double expected = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    CHECK(opacity_field(scene, ray, 10.0) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("opacity_field: empty scene contributes nothing") {
  const Scene scene;
  CHECK(opacity_field(scene, kZRay, 1.0) == 0.0);
}

TEST_CASE("opacity_field: mixture is linear in duplicated primitives") {
  Scene one = single_gaussian(Vec3(0, 0, 10), 1.0, 0.7);
  Scene two = one;
  two.primitives.push_back(two.primitives[0]);
  for (double t : {8.0, 10.0, 11.5}) {
    CHECK(opacity_field(two, kZRay, t) ==
          doctest::Approx(2.0 * opacity_field(one, kZRay, t)).epsilon(1e-15));
  }
}

TEST_CASE("ray_entropy: unit-sigma Gaussian matches the analytic differential entropy") {
  const Scene scene = single_gaussian(Vec3(0, 0, 10), 1.0);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 4.0, 16.0);  // mu +- 6 sigma
  CHECK(std::abs(ray_entropy(scene, ray, 128) - kHalfLog2PiE) < 1e-3);
  CHECK(std::abs(ray_entropy(scene, ray, 8192) - kHalfLog2PiE) < 1e-6);
}

TEST_CASE("ray_entropy: two well-separated equal Gaussians add ln 2") {
  Scene scene = single_gaussian(Vec3(0, 0, 30), 1.0);
  scene.primitives.push_back(scene.primitives[0]);
  scene.primitives[1].center = Vec3(0, 0, 70);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 24.0, 76.0);
  const double expected = kHalfLog2PiE + std::log(2.0);
  CHECK(std::abs(ray_entropy(scene, ray, 8192) - expected) < 2e-3);
}

TEST_CASE("ray_entropy: invariant to uniform scaling of weight times opacity") {
  Scene scene = single_gaussian(Vec3(0, 0, 10), 0.8, 0.4);
  scene.primitives.push_back(scene.primitives[0]);
  scene.primitives[1].center = Vec3(0.2, -0.1, 12.0);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 2.0, 20.0);
  const double base = ray_entropy(scene, ray, 512);
  for (auto& p : scene.primitives) p.weight *= 10.0;
  CHECK(ray_entropy(scene, ray, 512) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ray_entropy: merging co-located identical primitives is a no-op") {
  Scene merged = single_gaussian(Vec3(0, 0, 10), 1.0, 0.5);
  merged.primitives[0].weight = 2.0;
  Scene split = single_gaussian(Vec3(0, 0, 10), 1.0, 0.5);
  split.primitives.push_back(split.primitives[0]);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 4.0, 16.0);
  CHECK(ray_entropy(split, ray, 1024) ==
        doctest::Approx(ray_entropy(merged, ray, 1024)).epsilon(1e-12));
}

TEST_CASE("ray_entropy: invariant under translation along the ray direction") {
  Scene scene = single_gaussian(Vec3(0, 0, 10), 1.2, 0.6);
  scene.primitives.push_back(scene.primitives[0]);
  scene.primitives[1].center = Vec3(0.3, 0.0, 13.0);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 2.0, 22.0);
  const double base = ray_entropy(scene, ray, 2048);
  const double shift = 5.0;
  for (auto& p : scene.primitives) p.center.z() += shift;
  const Ray shifted(Vec3::Zero(), Vec3(0, 0, 1), 2.0 + shift, 22.0 + shift);
  CHECK(ray_entropy(scene, shifted, 2048) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("ray_entropy: quadrature refinement shrinks monotonically") {
  const Scene scene = single_gaussian(Vec3(0, 0, 10), 1.0);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 4.0, 16.0);
  const double e1 = ray_entropy(scene, ray, 64);
  const double e2 = ray_entropy(scene, ray, 128);
  const double e3 = ray_entropy(scene, ray, 256);
  CHECK(std::abs(e3 - e2) < std::abs(e2 - e1));
}

TEST_CASE("ray_entropy: a ray with no mass is a numeric error") {
  const Scene scene = single_gaussian(Vec3(100, 100, 10), 0.1);
  const Ray ray(Vec3::Zero(), Vec3(0, 0, 1), 0.0, 5.0);
  CHECK_THROWS_AS(ray_entropy(scene, ray, 128), NumericError);
  CHECK_THROWS_AS(ray_entropy(scene, ray, 8), UsageError);  // n_samples >= 16
}

TEST_CASE("project_to_ray: mean and variance are the 1D marginal moments") {
  GaussianPrimitive p;
  p.center = Vec3(1, 2, 7);
  p.scale = Vec3(0.5, 1.5, 2.5);
  const Ray ray(Vec3(1, 2, 0), Vec3(0, 0, 1), 0.0, 20.0);
  const RayGaussian g = project_to_ray(p, ray);
  CHECK(g.mean == doctest::Approx(7.0));
  CHECK(g.variance == doctest::Approx(2.5 * 2.5).epsilon(1e-12));
}

TEST_CASE("per_ray_depths: one on-axis primitive reports its depth and opacity") {
  const Scene scene = single_gaussian(Vec3(0, 0, 5), 1.0, 0.37);
  const auto contributions = per_ray_depths(scene, Ray(Vec3::Zero(), Vec3(0, 0, 1), 0.0, 20.0));
  REQUIRE(contributions.size() == 1);
  CHECK(contributions[0].index == 0);
  CHECK(contributions[0].depth == doctest::Approx(5.0));
  // Peak density on axis is exactly 1, so omega is the opacity itself.
  CHECK(contributions[0].omega == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("per_ray_depths: coplanar primitives share a depth; misses return empty") {
  Scene scene = single_gaussian(Vec3(0.3, 0, 5), 1.0);
  scene.primitives.push_back(scene.primitives[0]);
  scene.primitives[1].center = Vec3(-0.3, 0, 5);
  const auto contributions = per_ray_depths(scene, Ray(Vec3::Zero(), Vec3(0, 0, 1), 0.0, 20.0));
  REQUIRE(contributions.size() == 2);
  CHECK(contributions[0].depth == doctest::Approx(contributions[1].depth));

  const Scene far = single_gaussian(Vec3(500, 0, 5), 0.2);
  CHECK(per_ray_depths(far, Ray(Vec3::Zero(), Vec3(0, 0, 1), 0.0, 20.0)).empty());
}

TEST_CASE("per_ray_depths: depths match the dot-product oracle on random scenes") {
  Rng rng(91);
  std::vector<GaussianPrimitive> prims(30);
  for (auto& p : prims) {
    p.center = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 8));
    p.scale = Vec3(rng.uniform(0.2, 1), rng.uniform(0.2, 1), rng.uniform(0.2, 1));
    p.opacity = rng.uniform(0.1, 1.0);
  }
  const Scene scene(std::move(prims), 0.01);
  const Vec3 origin(0.1, -0.2, 0.0);
  const Vec3 direction = Vec3(0.2, 0.1, 1.0).normalized();
  const Ray ray(origin, direction, 0.0, 20.0);
  double previous = -1e300;
  for (const RayContribution& c : per_ray_depths(scene, ray)) {
    const double expected = direction.dot(scene.primitives[c.index].center - origin);
    CHECK(c.depth == doctest::Approx(expected).epsilon(1e-12));
    CHECK(c.depth >= previous);  // sorted front to back
    previous = c.depth;
  }
}

TEST_CASE("cost models: reproduce the reference operating point exactly") {
  CHECK(ray_cost_model(1000000, 128, 50) == 6400000000ULL);
  CHECK(neighborhood_cost_model(100000, 50) == 5000000ULL);
  CHECK(ray_cost_model(1000000, 128, 50) / neighborhood_cost_model(100000, 50) == 1280ULL);
}

TEST_CASE("make_ray_with_default_window: covers every primitive by six sigma") {
  Scene scene = single_gaussian(Vec3(0, 0, 4), 0.5);
  scene.primitives.push_back(scene.primitives[0]);
  scene.primitives[1].center = Vec3(0, 0, 9);
  const Ray ray = make_ray_with_default_window(scene, Vec3::Zero(), Vec3(0, 0, 1));
  CHECK(ray.t_near == doctest::Approx(4.0 - 3.0));  // min mean - 6 * sigma_max
  CHECK(ray.t_far == doctest::Approx(9.0 + 3.0));
}

TEST_CASE("ray constructor: rejects non-unit directions and empty windows") {
  CHECK_THROWS_AS(Ray(Vec3::Zero(), Vec3(0, 0, 2), 0.0, 1.0), ContractError);
  CHECK_THROWS_AS(Ray(Vec3::Zero(), Vec3(0, 0, 1), 1.0, 1.0), ContractError);
}

TEST_CASE("make_camera_rays: stride grid hits pixel centers with full windows") {
  const Camera cam = make_lookat_camera(Vec3(0, 0, 6), Vec3::Zero(), Vec3(0, 1, 0), 125.0, 96, 96);
  const auto rays = make_camera_rays(cam, 4);
  CHECK(rays.size() == 24 * 24);
  for (const PixelRay& pr : rays) {
    CHECK(pr.px % 4 == 2);  // offset stride/2
    CHECK(pr.py % 4 == 2);
    CHECK(pr.ray.t_near == doctest::Approx(kNearPlane));
    CHECK(std::abs(pr.ray.direction.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("ordering property: stacked scenes carry more ray entropy than aligned ones") {
  const Scene stacked = make_stacked_scene(12, 0.25, 5);
  const Scene tangential = make_tangential_scene(12, 5);
  // Probe both scenes along their shared normal (+z) through the origin.
  const Ray through(Vec3(0, 0, -10), Vec3(0, 0, 1), 0.0, 20.0);
  const double h_stacked = ray_entropy(stacked, through, 4096);
  // The tangential scene is a single plane: probe along +z as well.
  const double h_aligned = ray_entropy(tangential, through, 4096);
  CHECK(h_stacked > h_aligned);
}
