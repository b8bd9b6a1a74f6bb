#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "egs/error.hpp"
#include "egs/optimizer.hpp"
#include "egs/render.hpp"

namespace egs {

namespace {

constexpr double kStep = 1e-5;
constexpr int kFixturePrimitives = 18;
constexpr int kFixtureK = 4;

struct Fixture {
  Scene scene;
  Camera camera;
  NeighborGraph graph;
  std::vector<double> eta;
  std::vector<double> weights;
  std::vector<double> entropies;  // frozen align source values
  std::vector<PixelRay> rays;
  std::vector<int> windows{3, 5};
  std::vector<double> lambdas{0.6, 0.4};
  std::vector<Raster> align_targets;
  std::vector<Raster> align_weights;
  Raster align_mask;   // frozen covered-pixel set
  Raster photo_target;
  Raster depth_map;    // frozen reference for the normal term
  Raster coverage;
  RenderGeometry geometry_fixed;
  std::vector<double> quad_coeff;
  std::vector<double> quad_anchor;
};

Camera fixture_camera() {
  Camera cam;
  cam.focal = Vec2(42.0, 42.0);
  cam.principal_point = Vec2(15.5, 15.5);
  cam.resolution = {32, 32};
  return cam;
}

// The fixtures are screened so that no finite-difference probe can cross a
// discrete boundary of the losses: the 1e-6 contribution cutoff, blend depth
// ordering, and the orientation convention of the principal normal all keep
// a margin much wider than any probe can move them.
bool screens_pass(const Fixture& fx) {
  const Scene& scene = fx.scene;
  // Contribution densities keep a +-2% log margin around the 1e-6 cutoff.
  for (const PixelRay& pr : fx.rays) {
    for (const GaussianPrimitive& p : scene.primitives) {
      const double t = pr.ray.direction.dot(p.center - pr.ray.origin);
      if (t < pr.ray.t_near || t > pr.ray.t_far) continue;
      const double density = evaluate_density(p, pr.ray.origin + t * pr.ray.direction);
      if (density > 0.0 && std::abs(std::log(density) - std::log(1e-6)) < 0.02) {
        return false;
      }
    }
  }
  // Distinct blend depths (order flips would jump the composited values).
  std::vector<double> depths;
  for (const GaussianPrimitive& p : scene.primitives) depths.push_back(p.center.z());
  std::sort(depths.begin(), depths.end());
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (depths[i] - depths[i - 1] < 1e-4) return false;
  }
  // Stable orientation of every principal normal.
  for (const GaussianPrimitive& p : scene.primitives) {
    const NormalResult nr = principal_normal(p);
    if (nr.degenerate) return false;
    double mags[3] = {std::abs(nr.normal[0]), std::abs(nr.normal[1]),
                      std::abs(nr.normal[2])};
    std::sort(mags, mags + 3);
    if (mags[2] - mags[1] < 1e-3) return false;
  }
  // Both ray terms must actually be exercised.
  if (depth_loss(scene, fx.rays, nullptr) < 1e-6) return false;
  if (normal_loss(scene, fx.rays, fx.geometry_fixed, fx.depth_map, fx.coverage, nullptr) <
      1e-6) {
    return false;
  }
  return true;
}

Raster random_raster(Rng& rng, int w, int h, int c, double lo, double hi) {
  Raster r(w, h, c);
  for (double& v : r.data) v = rng.uniform(lo, hi);
  return r;
}

Fixture make_fixture(std::uint64_t base_seed, int seed_index) {
  for (int salt = 0; salt < 64; ++salt) {
    Rng rng(base_seed + 1000003ull * static_cast<std::uint64_t>(seed_index + 1) +
            7919ull * static_cast<std::uint64_t>(salt));
    Fixture fx;
    fx.camera = fixture_camera();

    std::vector<GaussianPrimitive> prims(kFixturePrimitives);
    for (GaussianPrimitive& p : prims) {
      p.center = Vec3(rng.uniform(-0.55, 0.55), rng.uniform(-0.55, 0.55),
                      rng.uniform(1.8, 2.4));
      double s[3] = {rng.uniform(0.08, 0.16), rng.uniform(0.08, 0.16),
                     rng.uniform(0.08, 0.16)};
      std::sort(s, s + 3);
      s[1] += 0.02;
      s[2] += 0.04;  // distinct by >= 0.02 so the principal axis is stable
      static const int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
      const int* perm = kPerms[rng.integer(0, 5)];
      p.scale = Vec3(s[perm[0]], s[perm[1]], s[perm[2]]);
      Vec4 q;
      do {
        for (int b = 0; b < 4; ++b) q[b] = rng.normal(0.0, 1.0);
      } while (q.norm() < 1e-6);
      p.rotation = q / q.norm();
      p.opacity = rng.uniform(0.45, 0.85);
      p.color = Vec3(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85),
                     rng.uniform(0.15, 0.85));
    }
    fx.scene = Scene(std::move(prims), 0.02);

    fx.rays = make_camera_rays(fx.camera, 5);
    fx.graph = build_knn(fx.scene, kFixtureK);
    fx.entropies = neighborhood_entropy_all(fx.scene, fx.graph);
    fx.eta.resize(fx.entropies.size());
    fx.weights.resize(fx.entropies.size());
    for (std::size_t i = 0; i < fx.entropies.size(); ++i) {
      fx.eta[i] = 0.7 * fx.entropies[i];  // hinge active with a wide margin
      fx.weights[i] = rng.uniform(0.3, 1.0);
    }

    const int w = fx.camera.resolution.x(), h = fx.camera.resolution.y();
    for (std::size_t l = 0; l < fx.windows.size(); ++l) {
      fx.align_targets.push_back(random_raster(rng, w, h, 1, 0.0, 1.5));
      fx.align_weights.push_back(random_raster(rng, w, h, 1, 0.2, 1.0));
    }
    fx.photo_target = random_raster(rng, w, h, 3, 0.0, 1.0);

    fx.geometry_fixed = build_render_geometry(fx.scene, fx.camera);
    fx.depth_map = render_depth(fx.geometry_fixed, fx.scene, &fx.coverage);
    fx.align_mask = Raster(w, h, 1);
    for (std::size_t i = 0; i < fx.align_mask.data.size(); ++i) {
      fx.align_mask.data[i] = fx.coverage.data[i] > 0.0 ? 1.0 : 0.0;
    }

    const std::size_t n_params =
        fx.scene.primitives.size() * SceneGrads::kParamsPerPrimitive;
    fx.quad_coeff.resize(n_params);
    fx.quad_anchor.resize(n_params);
    for (std::size_t i = 0; i < n_params; ++i) {
      fx.quad_coeff[i] = rng.uniform(0.5, 1.5);
      fx.quad_anchor[i] = rng.uniform(-0.5, 0.5);
    }

    if (!screens_pass(fx)) continue;

    // Kill |rendered - target| kinks: no pixel may sit within 1e-4 of the
    // L1 sign change, far wider than any probe-induced image change.
    const Raster rendered = render_image(fx.geometry_fixed, fx.scene, nullptr);
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
      if (std::abs(rendered.data[i] - fx.photo_target.data[i]) < 1e-4) {
        fx.photo_target.data[i] =
            std::clamp(rendered.data[i] > 0.5 ? rendered.data[i] - 0.05
                                              : rendered.data[i] + 0.05,
                       0.0, 1.0);
      }
    }
    return fx;
  }
  throw NumericError("gradcheck: could not build a screened fixture");
}

double quadratic_value(const Fixture& fx, const Scene& scene) {
  double acc = 0.0;
  std::size_t flat = 0;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    for (int p = 0; p < SceneGrads::kParamsPerPrimitive; ++p, ++flat) {
      const double d = scene_parameter(scene, i, p) - fx.quad_anchor[flat];
      acc += fx.quad_coeff[flat] * d * d;
    }
  }
  return acc;
}

double term_value(const std::string& term, const Fixture& fx, const Scene& scene) {
  if (term == "sparsity") {
    return sparsity_loss(scene, fx.graph, fx.eta, fx.weights, nullptr);
  }
  if (term == "depth") {
    return depth_loss(scene, fx.rays, nullptr);
  }
  if (term == "normal") {
    return normal_loss(scene, fx.rays, fx.geometry_fixed, fx.depth_map, fx.coverage,
                       nullptr);
  }
  if (term == "align") {
    const RenderGeometry geometry = build_render_geometry(scene, fx.camera);
    return align_loss(geometry, scene, fx.entropies, fx.windows, fx.align_targets,
                      fx.align_weights, fx.lambdas, nullptr, &fx.align_mask);
  }
  if (term == "photometric") {
    const RenderGeometry geometry = build_render_geometry(scene, fx.camera);
    const Raster rendered = render_image(geometry, scene, nullptr);
    return photometric_loss(rendered, fx.photo_target, 0.0, nullptr);
  }
  if (term == "quadratic") {
    return quadratic_value(fx, scene);
  }
  throw UsageError("gradcheck: unknown term '" + term +
                   "' (known: sparsity, depth, normal, align, photometric, quadratic)");
}

SceneGrads term_grads(const std::string& term, const Fixture& fx, const Scene& scene) {
  SceneGrads grads(scene.primitives.size());
  if (term == "sparsity") {
    sparsity_loss(scene, fx.graph, fx.eta, fx.weights, &grads);
  } else if (term == "depth") {
    depth_loss(scene, fx.rays, &grads);
  } else if (term == "normal") {
    normal_loss(scene, fx.rays, fx.geometry_fixed, fx.depth_map, fx.coverage, &grads);
  } else if (term == "align") {
    const RenderGeometry geometry = build_render_geometry(scene, fx.camera);
    align_loss(geometry, scene, fx.entropies, fx.windows, fx.align_targets,
               fx.align_weights, fx.lambdas, &grads, &fx.align_mask);
  } else if (term == "photometric") {
    const RenderGeometry geometry = build_render_geometry(scene, fx.camera);
    std::vector<double> colors(scene.primitives.size() * 3);
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      for (int c = 0; c < 3; ++c) colors[i * 3 + c] = scene.primitives[i].color[c];
    }
    const Raster rendered = render_values(geometry, scene, colors, 3, nullptr);
    Raster grad_image;
    photometric_loss(rendered, fx.photo_target, 0.0, &grad_image);
    std::vector<double> grad_colors;
    render_values_backward(geometry, scene, colors, 3, grad_image, &grads, &grad_colors);
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      for (int c = 0; c < 3; ++c) grads.color[i][c] += grad_colors[i * 3 + c];
    }
  } else if (term == "quadratic") {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
      for (int p = 0; p < SceneGrads::kParamsPerPrimitive; ++p, ++flat) {
        const double d = scene_parameter(scene, i, p) - fx.quad_anchor[flat];
        const double g = 2.0 * fx.quad_coeff[flat] * d;
        if (p < 3) {
          grads.center[i][p] += g;
        } else if (p < 6) {
          grads.scale[i][p - 3] += g;
        } else if (p < 10) {
          grads.rotation[i][p - 6] += g;
        } else if (p == 10) {
          grads.opacity[i] += g;
        } else {
          grads.color[i][p - 11] += g;
        }
      }
    }
  } else {
    throw UsageError("gradcheck: unknown term '" + term + "'");
  }
  return grads;
}

double term_tolerance(const std::string& term) {
  if (term == "align") return 1e-3;
  if (term == "quadratic") return 1e-10;
  return 1e-4;
}

// Central differences are exact for quadratics at any step, so the harness
// self-test uses a large one to push float roundoff below its 1e-10 bar.
double term_step(const std::string& term) { return term == "quadratic" ? 0.25 : kStep; }

}  // namespace

GradCheckReport run_gradcheck(const std::vector<std::string>& terms, int n_seeds,
                              std::uint64_t base_seed, bool corrupt_gradients) {
  if (terms.empty()) throw UsageError("gradcheck: no terms requested");
  if (n_seeds < 1) throw UsageError("gradcheck: n_seeds must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  GradCheckReport report;
  for (const std::string& term : terms) {
    GradCheckTermReport tr;
    tr.tolerance = term_tolerance(term);
    const double step = term_step(term);
    for (int seed = 0; seed < n_seeds; ++seed) {
      const Fixture fx = make_fixture(base_seed, seed);
      SceneGrads analytic = term_grads(term, fx, fx.scene);
      double gmax = analytic.max_abs();
      if (corrupt_gradients) {
        analytic.center[0][0] += 0.01 * std::max(1.0, gmax);
        gmax = analytic.max_abs();
      }
      const double zero_floor = 1e-9 * std::max(1.0, gmax);
      const double denom_floor = 1e-2 * gmax + 1e-12;
      for (std::size_t prim = 0; prim < fx.scene.primitives.size(); ++prim) {
        for (int param = 0; param < SceneGrads::kParamsPerPrimitive; ++param) {
          const double theta = scene_parameter(fx.scene, prim, param);
          Scene probe = fx.scene;
          set_scene_parameter(&probe, prim, param, theta + step);
          const double f_plus = term_value(term, fx, probe);
          set_scene_parameter(&probe, prim, param, theta - step);
          const double f_minus = term_value(term, fx, probe);
          const double numeric = (f_plus - f_minus) / (2.0 * step);
          const double a = analytic.component(prim, param);
          const double m = std::max(std::abs(a), std::abs(numeric));
          double err = 0.0;
          if (m >= zero_floor) {
            err = std::abs(a - numeric) / std::max(m, denom_floor);
          }
          if (err > tr.max_rel_error) {
            tr.max_rel_error = err;
            tr.worst_seed = seed;
            tr.worst_primitive = static_cast<int>(prim);
            tr.worst_param = param;
            tr.analytic_at_worst = a;
            tr.numeric_at_worst = numeric;
          }
        }
      }
    }
    tr.pass = tr.max_rel_error <= tr.tolerance;
    report.terms[term] = tr;
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.pass = true;
  for (const auto& [name, tr] : report.terms) report.pass = report.pass && tr.pass;
  return report;
}

}  // namespace egs
