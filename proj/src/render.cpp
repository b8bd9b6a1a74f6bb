#include "egs/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egs/error.hpp"

namespace egs {

namespace {

// Splat footprints keep full double precision end to end: the blended image
// is differentiated with 1e-5 finite-difference probes in the tests, so even
// single-precision rounding in the density would swamp the comparison.
struct SplatAccum {
  Mat2 grad_inv_cov = Mat2::Zero();
  Vec2 grad_center_px = Vec2::Zero();
  bool touched = false;
};

}  // namespace

RenderGeometry build_render_geometry(const Scene& scene, const Camera& camera,
                                     double mahalanobis_cut) {
  camera.validate();
  if (mahalanobis_cut <= 0.0) {
    throw UsageError("render: mahalanobis_cut must be positive");
  }
  RenderGeometry geom;
  geom.width = camera.resolution.x();
  geom.height = camera.resolution.y();
  geom.camera = camera;
  geom.mahalanobis_cut = mahalanobis_cut;

  const Mat3 rot = camera.rotation();
  const Vec3 trans = camera.translation();
  const double fx = camera.focal.x();
  const double fy = camera.focal.y();

  const std::size_t n = scene.primitives.size();
  geom.splats.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GaussianPrimitive& g = scene.primitives[i];
    ProjectedSplat& s = geom.splats[i];
    const Vec3 t = rot * g.center + trans;
    if (t.z() <= kNearPlane) continue;  // stays invisible
    const double tz = t.z();
    Mat23 jac = Mat23::Zero();
    jac(0, 0) = fx / tz;
    jac(0, 2) = -fx * t.x() / (tz * tz);
    jac(1, 1) = fy / tz;
    jac(1, 2) = -fy * t.y() / (tz * tz);
    const Mat3 cam_cov = rot * covariance(g) * rot.transpose();
    const Mat2 cov2 = jac * cam_cov * jac.transpose();
    const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
    if (!(det > 1e-300) || !std::isfinite(det)) continue;
    s.visible = true;
    s.cam_pos = t;
    s.proj_jac = jac;
    s.cam_cov = cam_cov;
    s.cov = cov2;
    s.inv_cov << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;
    s.center_px = Vec2(fx * t.x() / tz + camera.principal_point.x(),
                       fy * t.y() / tz + camera.principal_point.y());
    const double half_tr = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
    const double lambda_max = half_tr + disc;
    s.radius_px = std::sqrt(mahalanobis_cut * std::max(lambda_max, 0.0));
  }

  geom.depth_order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (geom.splats[i].visible) geom.depth_order.push_back(static_cast<std::uint32_t>(i));
  }
  std::stable_sort(geom.depth_order.begin(), geom.depth_order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double za = geom.splats[a].cam_pos.z();
                     const double zb = geom.splats[b].cam_pos.z();
                     if (za != zb) return za < zb;
                     return a < b;
                   });

  geom.pixels.assign(static_cast<std::size_t>(geom.width) * geom.height, {});
  for (std::uint32_t idx : geom.depth_order) {
    const ProjectedSplat& s = geom.splats[idx];
    const int x0 = std::max(0, static_cast<int>(std::ceil(s.center_px.x() - s.radius_px)));
    const int x1 = std::min(geom.width - 1,
                            static_cast<int>(std::floor(s.center_px.x() + s.radius_px)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.center_px.y() - s.radius_px)));
    const int y1 = std::min(geom.height - 1,
                            static_cast<int>(std::floor(s.center_px.y() + s.radius_px)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 delta(x - s.center_px.x(), y - s.center_px.y());
        const double m2 = delta.dot(s.inv_cov * delta);
        if (m2 <= mahalanobis_cut) {
          geom.pixels[static_cast<std::size_t>(y) * geom.width + x].push_back(
              {idx, std::exp(-0.5 * m2)});
        }
      }
    }
  }
  return geom;
}

Raster render_values(const RenderGeometry& geometry, const Scene& scene,
                     std::span<const double> values, int channels, Raster* coverage) {
  if (channels < 1) throw UsageError("render: channels must be >= 1");
  if (values.size() != scene.primitives.size() * static_cast<std::size_t>(channels)) {
    throw UsageError("render: values size does not match primitive count * channels");
  }
  Raster out(geometry.width, geometry.height, channels);
  if (coverage != nullptr) *coverage = Raster(geometry.width, geometry.height, 1);
  for (int y = 0; y < geometry.height; ++y) {
    for (int x = 0; x < geometry.width; ++x) {
      const auto& list = geometry.pixels[static_cast<std::size_t>(y) * geometry.width + x];
      double transmittance = 1.0;
      for (const PixelContribution& e : list) {
        const double omega = scene.primitives[e.splat].opacity * e.gauss;
        const double eff = omega * transmittance;
        for (int c = 0; c < channels; ++c) {
          out.at(x, y, c) += eff * values[e.splat * channels + c];
        }
        transmittance *= (1.0 - omega);
        if (transmittance < kTransmittanceFloor) break;
      }
      if (coverage != nullptr) coverage->at(x, y, 0) = 1.0 - transmittance;
    }
  }
  return out;
}

void render_values_backward(const RenderGeometry& geometry, const Scene& scene,
                            std::span<const double> values, int channels,
                            const Raster& grad_output, SceneGrads* grads,
                            std::vector<double>* grad_values) {
  if (grads == nullptr) throw ContractError("render backward: grads must not be null");
  if (values.size() != scene.primitives.size() * static_cast<std::size_t>(channels)) {
    throw UsageError("render backward: values size does not match primitive count * channels");
  }
  if (grad_output.width != geometry.width || grad_output.height != geometry.height ||
      grad_output.channels != channels) {
    throw UsageError("render backward: grad_output shape mismatch");
  }
  if (grads->size() != scene.primitives.size()) {
    throw ContractError("render backward: grads sized for a different scene");
  }
  if (grad_values != nullptr) grad_values->assign(values.size(), 0.0);

  std::vector<SplatAccum> accum(scene.primitives.size());
  std::vector<double> omegas;
  std::vector<double> transmittances;
  std::vector<double> suffix(static_cast<std::size_t>(channels));

  for (int y = 0; y < geometry.height; ++y) {
    for (int x = 0; x < geometry.width; ++x) {
      const auto& list = geometry.pixels[static_cast<std::size_t>(y) * geometry.width + x];
      if (list.empty()) continue;

      // Forward replay to find the truncation point and per-entry state.
      omegas.clear();
      transmittances.clear();
      double transmittance = 1.0;
      std::size_t active = 0;
      for (const PixelContribution& e : list) {
        const double omega = scene.primitives[e.splat].opacity * e.gauss;
        omegas.push_back(omega);
        transmittances.push_back(transmittance);
        ++active;
        transmittance *= (1.0 - omega);
        if (transmittance < kTransmittanceFloor) break;
      }

      std::fill(suffix.begin(), suffix.end(), 0.0);
      for (std::size_t k = active; k-- > 0;) {
        const PixelContribution& e = list[k];
        const GaussianPrimitive& g = scene.primitives[e.splat];
        const double omega = omegas[k];
        const double t_before = transmittances[k];
        const double eff = omega * t_before;
        double grad_omega = 0.0;
        const double one_minus = 1.0 - omega;
        for (int c = 0; c < channels; ++c) {
          const double go = grad_output.at(x, y, c);
          if (go == 0.0) continue;
          const double val = values[e.splat * channels + c];
          if (grad_values != nullptr) {
            (*grad_values)[e.splat * channels + c] += eff * go;
          }
          double term = val * t_before;
          if (one_minus > 1e-12) term -= suffix[c] / one_minus;
          grad_omega += go * term;
        }
        for (int c = 0; c < channels; ++c) {
          suffix[c] += eff * values[e.splat * channels + c];
        }
        if (grad_omega == 0.0) continue;
        grads->opacity[e.splat] += e.gauss * grad_omega;
        const double grad_gauss = g.opacity * grad_omega;
        const double grad_m2 = -0.5 * e.gauss * grad_gauss;
        const ProjectedSplat& s = geometry.splats[e.splat];
        const Vec2 delta(x - s.center_px.x(), y - s.center_px.y());
        SplatAccum& a = accum[e.splat];
        a.touched = true;
        a.grad_inv_cov += grad_m2 * (delta * delta.transpose());
        a.grad_center_px += -2.0 * grad_m2 * (s.inv_cov * delta);
      }
    }
  }

  const Mat3 rot = geometry.camera.rotation();
  const double fx = geometry.camera.focal.x();
  const double fy = geometry.camera.focal.y();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const SplatAccum& a = accum[i];
    if (!a.touched) continue;
    const ProjectedSplat& s = geometry.splats[i];
    const GaussianPrimitive& g = scene.primitives[i];

    // d m^2 / d inv_cov accumulated above; pull back through the inverse.
    const Mat2 grad_cov2 = -s.inv_cov * a.grad_inv_cov * s.inv_cov;

    const Mat23 basis = s.proj_jac * rot;
    const Mat3 grad_world_cov = basis.transpose() * grad_cov2 * basis;
    const Mat23 grad_jac = (grad_cov2 + grad_cov2.transpose()) * (s.proj_jac * s.cam_cov);

    const double tx = s.cam_pos.x();
    const double ty = s.cam_pos.y();
    const double tz = s.cam_pos.z();
    Vec3 grad_t = Vec3::Zero();
    grad_t.x() += a.grad_center_px.x() * fx / tz;
    grad_t.y() += a.grad_center_px.y() * fy / tz;
    grad_t.z() += a.grad_center_px.x() * (-fx * tx / (tz * tz)) +
                  a.grad_center_px.y() * (-fy * ty / (tz * tz));
    grad_t.x() += grad_jac(0, 2) * (-fx / (tz * tz));
    grad_t.y() += grad_jac(1, 2) * (-fy / (tz * tz));
    grad_t.z() += grad_jac(0, 0) * (-fx / (tz * tz)) + grad_jac(1, 1) * (-fy / (tz * tz)) +
                  grad_jac(0, 2) * (2.0 * fx * tx / (tz * tz * tz)) +
                  grad_jac(1, 2) * (2.0 * fy * ty / (tz * tz * tz));

    grads->center[i] += rot.transpose() * grad_t;
    Vec3 grad_scale;
    Vec4 grad_rotation;
    covariance_chain(g.scale, g.rotation, grad_world_cov, &grad_scale, &grad_rotation);
    grads->scale[i] += grad_scale;
    grads->rotation[i] += grad_rotation;
  }
}

Raster render_image(const RenderGeometry& geometry, const Scene& scene, Raster* coverage) {
  std::vector<double> values(scene.primitives.size() * 3);
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    values[i * 3 + 0] = scene.primitives[i].color.x();
    values[i * 3 + 1] = scene.primitives[i].color.y();
    values[i * 3 + 2] = scene.primitives[i].color.z();
  }
  return render_values(geometry, scene, values, 3, coverage);
}

Raster render_depth(const RenderGeometry& geometry, const Scene& scene, Raster* coverage) {
  std::vector<double> values(scene.primitives.size(), 0.0);
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    if (geometry.splats[i].visible) values[i] = geometry.splats[i].cam_pos.z();
  }
  return render_values(geometry, scene, values, 1, coverage);
}

EntropyMapRender render_entropy_levels(const RenderGeometry& geometry, const Scene& scene,
                                       std::span<const double> per_primitive_values,
                                       std::span<const int> windows) {
  EntropyMapRender out;
  out.blended = render_values(geometry, scene, per_primitive_values, 1, &out.coverage);
  out.smoothed.reserve(windows.size());
  for (int w : windows) {
    out.smoothed.push_back(box_filter(out.blended, w));
  }
  return out;
}

EntropyMapRender render_entropy_map(const Scene& scene, const NeighborGraph& graph,
                                    const Camera& camera, int window) {
  const RenderGeometry geometry = build_render_geometry(scene, camera);
  const std::vector<double> entropies = neighborhood_entropy_all(scene, graph);
  const int windows[1] = {window};
  return render_entropy_levels(geometry, scene, entropies, windows);
}

}  // namespace egs
