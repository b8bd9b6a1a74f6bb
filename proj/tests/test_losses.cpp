#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "egs/core.hpp"
#include "egs/losses.hpp"
#include "egs/neighborhood.hpp"
#include "egs/raster.hpp"
#include "egs/ray.hpp"
#include "egs/render.hpp"
#include "egs/synth.hpp"

using namespace egs;

namespace {

GaussianPrimitive ball_at(const Vec3& center, double sigma, double opacity) {
  GaussianPrimitive p;
  p.center = center;
  p.scale = Vec3(sigma, sigma, sigma);
  p.opacity = opacity;
  return p;
}

// A wide thin disk at the origin facing +z, plus a camera on the z axis.
struct DiskRig {
  Scene scene;
  Camera camera;
  PixelRay center_ray;
};

DiskRig make_disk_rig(double eye_z, double opacity) {
  GaussianPrimitive disk;
  disk.center = Vec3(0, 0, 0);
  disk.scale = Vec3(3.0, 3.0, 0.01);
  disk.opacity = opacity;
  DiskRig rig{Scene({disk}, 0.01),
              make_lookat_camera(Vec3(0, 0, eye_z), Vec3(0, 0, 0), Vec3(0, 1, 0), 60.0, 49, 49),
              {}};
  const Vec3 dir = (Vec3(0, 0, 0) - Vec3(0, 0, eye_z)).normalized();
  rig.center_ray = PixelRay{Ray(Vec3(0, 0, eye_z), dir, 0.1, 100.0), 24, 24};
  return rig;
}

Scene uniform_line_scene(int n, double opacity) {
  std::vector<GaussianPrimitive> prims;
  for (int i = 0; i < n; ++i) prims.push_back(ball_at(Vec3(0.3 * i, 0, 0), 0.1, opacity));
  return Scene(std::move(prims), 0.01);
}

}  // namespace

TEST_CASE("sparsity_loss: uniform neighborhoods hit the closed-form hinge") {
  const Scene scene = uniform_line_scene(4, 0.5);
  const NeighborGraph graph = build_knn(scene, 3);
  const std::vector<double> eta(4, 1.0);
  const std::vector<double> ones(4, 1.0);
  // Every neighborhood is the whole set with uniform shares: H = ln 4.
  const double hinge = std::log(4.0) - 1.0;
  const double expected = 4.0 * hinge * hinge;
  CHECK(sparsity_loss(scene, graph, eta, ones, nullptr) ==
        doctest::Approx(expected).epsilon(1e-12));

  // Weights scale each neighborhood's term linearly.
  const std::vector<double> doubled(4, 2.0);
  CHECK(sparsity_loss(scene, graph, eta, doubled, nullptr) ==
        doctest::Approx(2.0 * expected).epsilon(1e-12));
}

TEST_CASE("sparsity_loss: thresholds above the entropy give zero loss and gradient") {
  const Scene scene = uniform_line_scene(5, 0.6);
  const NeighborGraph graph = build_knn(scene, 4);
  const std::vector<double> eta(5, std::log(5.0) + 0.01);
  const std::vector<double> ones(5, 1.0);
  SceneGrads grads(5);
  CHECK(sparsity_loss(scene, graph, eta, ones, &grads) == 0.0);
  CHECK(grads.max_abs() == 0.0);
}

TEST_CASE("sparsity_loss: opacity gradients match central differences") {
  Rng rng(17);
  std::vector<GaussianPrimitive> prims;
  for (int i = 0; i < 10; ++i) {
    prims.push_back(ball_at(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
                            0.1, rng.uniform(0.2, 0.9)));
  }
  Scene scene(std::move(prims), 0.01);
  const NeighborGraph graph = build_knn(scene, 3);
  // Keep every hinge strongly active so the loss is smooth around the point.
  const std::vector<double> eta(10, 0.5 * std::log(4.0));
  std::vector<double> weights(10);
  for (auto& w : weights) w = rng.uniform(0.5, 1.5);

  SceneGrads grads(10);
  sparsity_loss(scene, graph, eta, weights, &grads);
  const double h = 1e-6;
  for (int j = 0; j < 10; ++j) {
    const double saved = scene.primitives[j].opacity;
    scene.primitives[j].opacity = saved + h;
    const double up = sparsity_loss(scene, graph, eta, weights, nullptr);
    scene.primitives[j].opacity = saved - h;
    const double down = sparsity_loss(scene, graph, eta, weights, nullptr);
    scene.primitives[j].opacity = saved;
    const double numeric = (up - down) / (2.0 * h);
    CHECK(grads.opacity[j] == doctest::Approx(numeric).epsilon(1e-5));
  }
}

TEST_CASE("sparsity_loss: contract and numeric guards") {
  Scene scene = uniform_line_scene(4, 0.5);
  const NeighborGraph graph = build_knn(scene, 3);
  const std::vector<double> eta(4, 1.0);
  const std::vector<double> ones(4, 1.0);
  const std::vector<double> short_eta(3, 1.0);
  CHECK_THROWS_AS(sparsity_loss(scene, graph, short_eta, ones, nullptr), ContractError);
  CHECK_THROWS_AS(sparsity_loss(scene, graph, eta, short_eta, nullptr), ContractError);

  const Scene other = uniform_line_scene(5, 0.5);
  CHECK_THROWS_AS(sparsity_loss(other, graph, eta, ones, nullptr), ContractError);

  for (auto& p : scene.primitives) p.opacity = 0.0;
  CHECK_THROWS_AS(sparsity_loss(scene, graph, eta, ones, nullptr), NumericError);
}

TEST_CASE("depth_loss: two unit contributions at depths 1 and 3 cost 8") {
  std::vector<GaussianPrimitive> prims = {ball_at(Vec3(0, 0, 1), 0.5, 1.0),
                                          ball_at(Vec3(0, 0, 3), 0.5, 1.0)};
  const Scene scene(prims, 0.01);
  const std::vector<PixelRay> rays = {{Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0}};
  // Both closest points are the centers, so omega = opacity = 1 for each and
  // the ordered-pair variance sum is 1*1*(3-1)^2 counted both ways.
  CHECK(depth_loss(scene, rays, nullptr) == doctest::Approx(8.0).epsilon(1e-12));

  // Reversing primitive order changes nothing.
  std::vector<GaussianPrimitive> swapped = {prims[1], prims[0]};
  const Scene reversed(swapped, 0.01);
  CHECK(depth_loss(reversed, rays, nullptr) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("depth_loss: rays with fewer than two contributors are skipped") {
  const Scene one(std::vector<GaussianPrimitive>{ball_at(Vec3(0, 0, 5), 0.5, 0.8)}, 0.01);
  const std::vector<PixelRay> rays = {{Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0}};
  CHECK(depth_loss(one, rays, nullptr) == 0.0);
  CHECK(depth_loss(one, {}, nullptr) == 0.0);
}

TEST_CASE("depth_loss: coincident depths have zero variance") {
  std::vector<GaussianPrimitive> prims = {ball_at(Vec3(0.1, 0, 5), 0.5, 0.7),
                                          ball_at(Vec3(-0.1, 0, 5), 0.5, 0.4)};
  const Scene scene(prims, 0.01);
  const std::vector<PixelRay> rays = {{Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0}};
  CHECK(depth_loss(scene, rays, nullptr) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("depth_loss: matches the explicit pairwise oracle") {
  Rng rng(23);
  std::vector<GaussianPrimitive> prims;
  for (int i = 0; i < 5; ++i) {
    prims.push_back(ball_at(Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 2.0 + i),
                            0.6, rng.uniform(0.3, 0.8)));
  }
  const Scene scene(prims, 0.01);
  std::vector<PixelRay> rays;
  for (int r = 0; r < 3; ++r) {
    const Vec3 dir = Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 1.0).normalized();
    rays.push_back({Ray(Vec3(0, 0, 0), dir, 0.1, 100.0), r, 0});
  }
  double expected = 0.0;
  for (const PixelRay& pr : rays) {
    const auto contrib = per_ray_depths(scene, pr.ray);
    if (contrib.size() < 2) continue;
    for (const auto& a : contrib) {
      for (const auto& b : contrib) {
        if (&a == &b) continue;
        expected += a.omega * b.omega * (a.depth - b.depth) * (a.depth - b.depth);
      }
    }
  }
  CHECK(depth_loss(scene, rays, nullptr) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("depth_loss: gradients match central differences") {
  Rng rng(29);
  std::vector<GaussianPrimitive> prims;
  for (int i = 0; i < 4; ++i) {
    prims.push_back(ball_at(Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 2.0 + 1.5 * i),
                            0.5, rng.uniform(0.4, 0.7)));
  }
  Scene scene(prims, 0.01);
  std::vector<PixelRay> rays = {
      {Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0},
      {Ray(Vec3(0.05, 0, 0), Vec3(0.01, -0.01, 1.0).normalized(), 0.1, 100.0), 1, 0}};

  SceneGrads grads(4);
  depth_loss(scene, rays, &grads);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    for (int axis = 0; axis < 3; ++axis) {
      const double saved = scene.primitives[j].center[axis];
      scene.primitives[j].center[axis] = saved + h;
      const double up = depth_loss(scene, rays, nullptr);
      scene.primitives[j].center[axis] = saved - h;
      const double down = depth_loss(scene, rays, nullptr);
      scene.primitives[j].center[axis] = saved;
      const double numeric = (up - down) / (2.0 * h);
      CHECK(grads.center[j][axis] ==
            doctest::Approx(numeric).epsilon(1e-4).scale(std::max(1.0, std::abs(numeric))));
    }
    const double saved = scene.primitives[j].opacity;
    scene.primitives[j].opacity = saved + h;
    const double up = depth_loss(scene, rays, nullptr);
    scene.primitives[j].opacity = saved - h;
    const double down = depth_loss(scene, rays, nullptr);
    scene.primitives[j].opacity = saved;
    CHECK(grads.opacity[j] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
  }
}

TEST_CASE("normal_loss: aligned disk costs zero, anti-aligned disk costs 2 per unit mass") {
  // Front view: the camera sees the face the principal normal points at.
  {
    const DiskRig rig = make_disk_rig(5.0, 0.9);
    const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
    Raster coverage;
    const Raster depth_map = render_depth(geom, rig.scene, &coverage);
    REQUIRE(coverage.at(24, 24) > 0.5);
    const std::vector<PixelRay> rays = {rig.center_ray};
    const double loss = normal_loss(rig.scene, rays, geom, depth_map, coverage, nullptr);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-9));
  }
  // Back view: the reference normal flips while the primitive normal cannot.
  {
    const DiskRig rig = make_disk_rig(-5.0, 0.9);
    const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
    Raster coverage;
    const Raster depth_map = render_depth(geom, rig.scene, &coverage);
    const std::vector<PixelRay> rays = {rig.center_ray};
    const auto contrib = per_ray_depths(rig.scene, rig.center_ray.ray);
    REQUIRE(contrib.size() == 1);
    const double loss = normal_loss(rig.scene, rays, geom, depth_map, coverage, nullptr);
    CHECK(loss == doctest::Approx(2.0 * contrib[0].omega).epsilon(1e-9));
    CHECK(contrib[0].omega == doctest::Approx(0.9).epsilon(1e-12));
  }
}

TEST_CASE("normal_loss: border and uncovered rays are skipped") {
  const DiskRig rig = make_disk_rig(5.0, 0.9);
  const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
  Raster coverage;
  const Raster depth_map = render_depth(geom, rig.scene, &coverage);
  // A ray tagged with a border pixel is skipped outright.
  std::vector<PixelRay> border = {PixelRay{rig.center_ray.ray, 0, 24}};
  CHECK(normal_loss(rig.scene, border, geom, depth_map, coverage, nullptr) == 0.0);
  // A pixel whose stencil has no coverage is skipped too.
  std::vector<PixelRay> corner = {PixelRay{rig.center_ray.ray, 1, 1}};
  REQUIRE(coverage.at(1, 1) < 0.5);
  CHECK(normal_loss(rig.scene, corner, geom, depth_map, coverage, nullptr) == 0.0);
}

TEST_CASE("normal_loss: raster shape mismatches are contract errors") {
  const DiskRig rig = make_disk_rig(5.0, 0.9);
  const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
  Raster coverage;
  const Raster depth_map = render_depth(geom, rig.scene, &coverage);
  const std::vector<PixelRay> rays = {rig.center_ray};
  CHECK_THROWS_AS(
      normal_loss(rig.scene, rays, geom, Raster(10, 10, 1), coverage, nullptr),
      ContractError);
  CHECK_THROWS_AS(
      normal_loss(rig.scene, rays, geom, depth_map, Raster(10, 10, 1), nullptr),
      ContractError);
}

TEST_CASE("align_loss: masked single pixel reproduces the quadratic penalty") {
  const DiskRig rig = make_disk_rig(5.0, 1.0);
  const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
  const std::vector<double> cached = {2.0};

  Raster coverage;
  const Raster blended = render_values(geom, rig.scene, cached, 1, &coverage);
  const double smoothed_center = box_filter(blended, 3).at(24, 24);

  Raster target(49, 49, 1, 0.0);
  target.at(24, 24) = smoothed_center - 0.5;
  Raster weight(49, 49, 1, 1.0);
  Raster mask(49, 49, 1, 0.0);
  mask.at(24, 24) = 1.0;

  const std::vector<int> windows = {3};
  const std::vector<Raster> targets = {target};
  const std::vector<Raster> weights = {weight};
  const std::vector<double> lambdas = {1.0};
  const double loss = align_loss(geom, rig.scene, cached, windows, targets, weights,
                                 lambdas, nullptr, &mask);
  CHECK(loss == doctest::Approx(0.25).epsilon(1e-12));

  // The level scale multiplies the term.
  const std::vector<double> lambda2 = {2.0};
  CHECK(align_loss(geom, rig.scene, cached, windows, targets, weights, lambda2, nullptr,
                   &mask) == doctest::Approx(0.5).epsilon(1e-12));

  // Levels add independently.
  const std::vector<int> two_windows = {3, 3};
  const std::vector<Raster> two_targets = {target, target};
  const std::vector<Raster> two_weights = {weight, weight};
  const std::vector<double> two_lambdas = {1.0, 1.0};
  CHECK(align_loss(geom, rig.scene, cached, two_windows, two_targets, two_weights,
                   two_lambdas, nullptr, &mask) == doctest::Approx(0.5).epsilon(1e-12));

  // A perfectly matched target is free.
  Raster exact = target;
  exact.at(24, 24) = smoothed_center;
  const std::vector<Raster> exact_targets = {exact};
  CHECK(align_loss(geom, rig.scene, cached, windows, exact_targets, weights, lambdas,
                   nullptr, &mask) == 0.0);
}

TEST_CASE("align_loss: argument validation") {
  const DiskRig rig = make_disk_rig(5.0, 1.0);
  const RenderGeometry geom = build_render_geometry(rig.scene, rig.camera);
  const std::vector<double> cached = {2.0};
  const std::vector<int> windows = {3};
  const std::vector<Raster> targets = {Raster(49, 49, 1)};
  const std::vector<Raster> weights = {Raster(49, 49, 1, 1.0)};
  const std::vector<double> lambdas = {1.0};

  const std::vector<double> two_lambdas = {1.0, 0.5};
  CHECK_THROWS_AS(align_loss(geom, rig.scene, cached, windows, targets, weights,
                             two_lambdas, nullptr, nullptr),
                  ContractError);
  const std::vector<double> wrong_cached = {2.0, 1.0};
  CHECK_THROWS_AS(align_loss(geom, rig.scene, wrong_cached, windows, targets, weights,
                             lambdas, nullptr, nullptr),
                  ContractError);
  Raster bad_mask(10, 10, 1);
  CHECK_THROWS_AS(align_loss(geom, rig.scene, cached, windows, targets, weights, lambdas,
                             nullptr, &bad_mask),
                  ContractError);
  const std::vector<Raster> bad_targets = {Raster(10, 10, 1)};
  CHECK_THROWS_AS(align_loss(geom, rig.scene, cached, windows, bad_targets, weights,
                             lambdas, nullptr, nullptr),
                  ContractError);
}

TEST_CASE("photometric_loss: L1 and SSIM endpoints") {
  Raster a(16, 16, 1);
  Rng rng(31);
  for (auto& v : a.data) v = rng.uniform(0.2, 0.8);
  Raster b = a;
  CHECK(photometric_loss(a, b, 0.0, nullptr) == 0.0);
  CHECK(photometric_loss(a, b, 0.2, nullptr) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  for (auto& v : b.data) v += 0.25;
  CHECK(photometric_loss(a, b, 0.0, nullptr) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("photometric_loss: mix interpolates the two metrics") {
  Raster a(16, 16, 1), b(16, 16, 1);
  Rng rng(37);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = rng.uniform(0.2, 0.8);
    b.data[i] = rng.uniform(0.2, 0.8);
  }
  const double l1 = photometric_loss(a, b, 0.0, nullptr);
  const double s = ssim(a, b);
  CHECK(s < 1.0);
  CHECK(photometric_loss(a, b, 0.2, nullptr) ==
        doctest::Approx(0.8 * l1 + 0.2 * (1.0 - s)).epsilon(1e-12));
  CHECK(photometric_loss(a, b, 1.0, nullptr) == doctest::Approx(1.0 - s).epsilon(1e-12));
}

TEST_CASE("photometric_loss: validation") {
  Raster a(16, 16, 1), b(16, 15, 1);
  CHECK_THROWS_AS(photometric_loss(a, b, 0.0, nullptr), ContractError);
  Raster c(16, 16, 1);
  CHECK_THROWS_AS(photometric_loss(a, c, -0.1, nullptr), UsageError);
  CHECK_THROWS_AS(photometric_loss(a, c, 1.1, nullptr), UsageError);
}

TEST_CASE("photometric_loss: image gradient matches central differences") {
  Raster a(16, 16, 1), b(16, 16, 1);
  Rng rng(41);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = rng.uniform(0.3, 0.7);
    // Keep |a - b| bounded away from the L1 kink at zero.
    b.data[i] = a.data[i] + (i % 2 == 0 ? 0.1 : -0.1) + rng.uniform(0.0, 0.05);
  }
  Raster grad;
  photometric_loss(a, b, 0.2, &grad);
  const double h = 1e-6;
  for (std::size_t idx : {std::size_t{0}, std::size_t{37}, std::size_t{128}, std::size_t{255}}) {
    const double saved = a.data[idx];
    a.data[idx] = saved + h;
    const double up = photometric_loss(a, b, 0.2, nullptr);
    a.data[idx] = saved - h;
    const double down = photometric_loss(a, b, 0.2, nullptr);
    a.data[idx] = saved;
    CHECK(grad.data[idx] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-4));
  }
}

TEST_CASE("total_loss: disabled terms are exactly zero with zero gradients") {
  const Scene scene = uniform_line_scene(4, 0.5);
  LossConfig config;
  config.photometric = config.sparsity = config.depth = config.normal = config.align = false;
  LossInputs in;
  in.scene = &scene;
  const LossBreakdown out = total_loss(in, config);
  CHECK(out.total == 0.0);
  CHECK(out.photometric == 0.0);
  CHECK(out.sparsity == 0.0);
  CHECK(out.depth == 0.0);
  CHECK(out.normal == 0.0);
  CHECK(out.align == 0.0);
  CHECK(out.grads.max_abs() == 0.0);
}

TEST_CASE("total_loss: sparsity term reports unscaled value and scaled gradients") {
  const Scene scene = uniform_line_scene(4, 0.5);
  const NeighborGraph graph = build_knn(scene, 3);
  const std::vector<double> eta(4, 1.0);

  LossConfig config;
  config.photometric = config.depth = config.normal = config.align = false;
  config.sparsity = true;
  config.lambda_sparsity = 0.3;

  LossInputs in;
  in.scene = &scene;
  in.graph = &graph;
  in.eta = eta;
  const LossBreakdown out = total_loss(in, config);

  const std::vector<double> ones(4, 1.0);
  SceneGrads direct(4);
  const double ref = sparsity_loss(scene, graph, eta, ones, &direct);
  CHECK(out.sparsity == doctest::Approx(ref).epsilon(1e-15));
  CHECK(out.total == doctest::Approx(0.3 * ref).epsilon(1e-15));
  for (int i = 0; i < 4; ++i) {
    CHECK(out.grads.opacity[i] == doctest::Approx(0.3 * direct.opacity[i]).epsilon(1e-12));
  }

  // Empty image weights mean all ones: passing them explicitly changes nothing.
  std::vector<double> explicit_ones(4, 1.0);
  LossInputs with_weights = in;
  with_weights.image_weights = explicit_ones;
  CHECK(total_loss(with_weights, config).sparsity == doctest::Approx(ref).epsilon(1e-15));
}

TEST_CASE("total_loss: depth term sums the per-camera bundles") {
  std::vector<GaussianPrimitive> prims = {ball_at(Vec3(0, 0, 1), 0.5, 1.0),
                                          ball_at(Vec3(0, 0, 3), 0.5, 1.0)};
  const Scene scene(prims, 0.01);
  std::vector<std::vector<PixelRay>> bundles = {
      {{Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0}},
      {{Ray(Vec3(0, 0, 0), Vec3(0, 0, 1), 0.1, 100.0), 0, 0}}};
  const std::vector<Camera> cameras(2);

  LossConfig config;
  config.photometric = config.sparsity = config.normal = config.align = false;
  config.depth = true;

  LossInputs in;
  in.scene = &scene;
  in.cameras = cameras;
  in.rays = &bundles;
  const LossBreakdown out = total_loss(in, config);
  CHECK(out.depth == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(out.total == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("total_loss: missing inputs are contract errors") {
  const Scene scene = uniform_line_scene(4, 0.5);
  LossConfig config;
  config.photometric = config.depth = config.normal = config.align = false;
  config.sparsity = true;
  LossInputs in;
  in.scene = &scene;
  CHECK_THROWS_AS(total_loss(in, config), ContractError);  // no graph

  LossConfig depth_only;
  depth_only.photometric = depth_only.sparsity = depth_only.normal = depth_only.align = false;
  depth_only.depth = true;
  CHECK_THROWS_AS(total_loss(in, depth_only), ContractError);  // no rays

  LossInputs empty;
  CHECK_THROWS_AS(total_loss(empty, LossConfig{}), ContractError);  // no scene
}
