#include "egs/losses.hpp"

#include <algorithm>
#include <cmath>

#include "egs/error.hpp"

namespace egs {

namespace {

// --- separable convolution with replicate padding (and exact adjoint) ------

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    taps[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Raster conv_separable(const Raster& src, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size()) / 2;
  Raster tmp(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
          const int sx = std::clamp(x + k - r, 0, src.width - 1);
          acc += taps[k] * src.at(sx, y, c);
        }
        tmp.at(x, y, c) = acc;
      }
    }
  }
  Raster out(src.width, src.height, src.channels);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
          const int sy = std::clamp(y + k - r, 0, src.height - 1);
          acc += taps[k] * tmp.at(x, sy, c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

Raster conv_separable_adjoint(const Raster& grad, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size()) / 2;
  Raster tmp(grad.width, grad.height, grad.channels);
  for (int y = 0; y < grad.height; ++y) {
    for (int x = 0; x < grad.width; ++x) {
      for (int c = 0; c < grad.channels; ++c) {
        const double g = grad.at(x, y, c);
        if (g == 0.0) continue;
        for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
          const int sy = std::clamp(y + k - r, 0, grad.height - 1);
          tmp.at(x, sy, c) += taps[k] * g;
        }
      }
    }
  }
  Raster out(grad.width, grad.height, grad.channels);
  for (int y = 0; y < grad.height; ++y) {
    for (int x = 0; x < grad.width; ++x) {
      for (int c = 0; c < grad.channels; ++c) {
        const double g = tmp.at(x, y, c);
        if (g == 0.0) continue;
        for (int k = 0; k < static_cast<int>(taps.size()); ++k) {
          const int sx = std::clamp(x + k - r, 0, grad.width - 1);
          out.at(sx, y, c) += taps[k] * g;
        }
      }
    }
  }
  return out;
}

// --- shared chain rule for per-ray contribution weights --------------------

// omega = opacity * exp(-q/2) evaluated at the closest ray point, with
// depth d = direction . (center - origin). Pushes dL/domega and dL/dd into
// the primitive's parameters.
void contribution_backward(const GaussianPrimitive& prim, const Ray& ray,
                           double depth, double grad_omega, double grad_depth,
                           std::size_t index, SceneGrads* grads) {
  grads->center[index] += grad_depth * ray.direction;
  if (grad_omega == 0.0) return;

  const Mat3 rot = rotation_matrix(prim.rotation);
  Vec3 inv_var;
  for (int a = 0; a < 3; ++a) inv_var[a] = 1.0 / (prim.scale[a] * prim.scale[a]);
  const Mat3 sigma_inv = rot * inv_var.asDiagonal() * rot.transpose();

  const Vec3 closest = ray.origin + depth * ray.direction;
  const Vec3 resid = closest - prim.center;
  const double q = resid.dot(sigma_inv * resid);
  const double density = std::exp(-0.5 * q);

  grads->opacity[index] += grad_omega * density;
  const double grad_q = grad_omega * prim.opacity * density * -0.5;

  // r = -(I - d d^T)(center - origin), so dr/dcenter = -(I - d d^T).
  const Vec3 grad_resid = 2.0 * grad_q * (sigma_inv * resid);
  grads->center[index] += -(grad_resid - ray.direction * ray.direction.dot(grad_resid));

  const Mat3 grad_sigma = -grad_q * (sigma_inv * resid) * (sigma_inv * resid).transpose();
  Vec3 grad_scale;
  Vec4 grad_rotation;
  covariance_chain(prim.scale, prim.rotation, grad_sigma, &grad_scale, &grad_rotation);
  grads->scale[index] += grad_scale;
  grads->rotation[index] += grad_rotation;
}

Vec3 camera_space_point(const Camera& cam, int x, int y, double depth) {
  return Vec3((x - cam.principal_point.x()) / cam.focal.x() * depth,
              (y - cam.principal_point.y()) / cam.focal.y() * depth, depth);
}

constexpr double kCoverageValid = 0.5;

}  // namespace

double sparsity_loss(const Scene& scene, const NeighborGraph& graph,
                     std::span<const double> eta, std::span<const double> weights,
                     SceneGrads* grads) {
  const std::size_t n = scene.primitives.size();
  if (graph.neighbor_indices.size() != n) {
    throw ContractError("sparsity: neighbor graph does not match the scene");
  }
  if (eta.size() != n || weights.size() != n) {
    throw ContractError("sparsity: thresholds/weights must have one entry per primitive");
  }
  double loss = 0.0;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    members.clear();
    members.push_back(i);
    for (int j : graph.neighbor_indices[i]) members.push_back(static_cast<std::size_t>(j));

    double total = 0.0;
    for (std::size_t m : members) total += std::max(scene.primitives[m].opacity, 0.0);
    if (!(total > 1e-12)) {
      throw NumericError("sparsity: neighborhood opacity mass below 1e-12");
    }
    double entropy = 0.0;
    for (std::size_t m : members) {
      const double o = std::max(scene.primitives[m].opacity, 0.0);
      if (o <= 0.0) continue;
      const double p = o / total;
      entropy -= p * std::log(p);
    }
    const double hinge = entropy - eta[i];
    if (hinge <= 0.0) continue;
    loss += weights[i] * hinge * hinge;
    if (grads == nullptr) continue;
    const double coeff = 2.0 * weights[i] * hinge;
    for (std::size_t m : members) {
      const double o = std::max(scene.primitives[m].opacity, 1e-300);
      const double dh = (-std::log(o / total) - entropy) / total;
      grads->opacity[m] += coeff * dh;
    }
  }
  return loss;
}

double depth_loss(const Scene& scene, std::span<const PixelRay> rays, SceneGrads* grads) {
  double loss = 0.0;
  for (const PixelRay& pr : rays) {
    const std::vector<RayContribution> contrib = per_ray_depths(scene, pr.ray);
    if (contrib.size() < 2) continue;
    double mass = 0.0, first = 0.0, second = 0.0;
    for (const RayContribution& c : contrib) {
      mass += c.omega;
      first += c.omega * c.depth;
      second += c.omega * c.depth * c.depth;
    }
    loss += 2.0 * (mass * second - first * first);
    if (grads == nullptr) continue;
    for (const RayContribution& c : contrib) {
      const double grad_d = 4.0 * c.omega * (mass * c.depth - first);
      const double grad_omega =
          2.0 * (mass * c.depth * c.depth - 2.0 * first * c.depth + second);
      contribution_backward(scene.primitives[c.index], pr.ray, c.depth, grad_omega, grad_d,
                            static_cast<std::size_t>(c.index), grads);
    }
  }
  return loss;
}

double normal_loss(const Scene& scene, std::span<const PixelRay> rays,
                   const RenderGeometry& geometry, const Raster& depth_map,
                   const Raster& coverage, SceneGrads* grads) {
  if (depth_map.channels != 1 || coverage.channels != 1 ||
      depth_map.width != geometry.width || depth_map.height != geometry.height ||
      !depth_map.same_shape(coverage)) {
    throw ContractError("normal loss: depth map / coverage shape mismatch");
  }
  const Camera& cam = geometry.camera;
  const Mat3 rot = cam.rotation();
  double loss = 0.0;
  for (const PixelRay& pr : rays) {
    const int x = pr.px, y = pr.py;
    if (x < 1 || y < 1 || x > geometry.width - 2 || y > geometry.height - 2) continue;
    bool covered = true;
    const int stencil[5][2] = {{x, y}, {x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (const auto& s : stencil) {
      if (coverage.at(s[0], s[1], 0) < kCoverageValid) {
        covered = false;
        break;
      }
    }
    if (!covered) continue;

    const Vec3 px_pos = camera_space_point(cam, x + 1, y, depth_map.at(x + 1, y, 0));
    const Vec3 nx_pos = camera_space_point(cam, x - 1, y, depth_map.at(x - 1, y, 0));
    const Vec3 py_pos = camera_space_point(cam, x, y + 1, depth_map.at(x, y + 1, 0));
    const Vec3 ny_pos = camera_space_point(cam, x, y - 1, depth_map.at(x, y - 1, 0));
    Vec3 n_cam = (px_pos - nx_pos).cross(py_pos - ny_pos);
    const double norm = n_cam.norm();
    if (norm < 1e-12) continue;
    n_cam /= norm;
    if (n_cam.z() > 0.0) n_cam = -n_cam;  // face the camera
    const Vec3 n_ref = rot.transpose() * n_cam;

    for (const RayContribution& c : per_ray_depths(scene, pr.ray)) {
      const GaussianPrimitive& prim = scene.primitives[c.index];
      const NormalResult nr = principal_normal(prim);
      const double term = 1.0 - nr.normal.dot(n_ref);
      loss += c.omega * term;
      if (grads == nullptr) continue;
      contribution_backward(prim, pr.ray, c.depth, term, 0.0,
                            static_cast<std::size_t>(c.index), grads);
      if (nr.degenerate) continue;
      const Vec3 grad_col = -c.omega * nr.sign * n_ref;
      const std::array<Mat3, 4> rot_grads = rotation_matrix_grads(prim.rotation);
      for (int b = 0; b < 4; ++b) {
        grads->rotation[c.index][b] += grad_col.dot(rot_grads[b].col(nr.axis));
      }
    }
  }
  return loss;
}

double align_loss(const RenderGeometry& geometry, const Scene& scene,
                  std::span<const double> cached_entropies, std::span<const int> windows,
                  std::span<const Raster> targets, std::span<const Raster> weights,
                  std::span<const double> lambdas, SceneGrads* grads, const Raster* mask) {
  const std::size_t levels = windows.size();
  if (targets.size() != levels || weights.size() != levels || lambdas.size() != levels) {
    throw ContractError("align loss: per-level argument counts disagree");
  }
  if (cached_entropies.size() != scene.primitives.size()) {
    throw ContractError("align loss: one cached entropy per primitive required");
  }
  Raster coverage;
  const Raster blended =
      render_values(geometry, scene, cached_entropies, 1, &coverage);
  if (mask != nullptr && !mask->same_shape(coverage)) {
    throw ContractError("align loss: mask raster shape mismatch");
  }
  auto included = [&](int x, int y) {
    return mask != nullptr ? mask->at(x, y, 0) > 0.5 : coverage.at(x, y, 0) > 0.0;
  };

  double loss = 0.0;
  Raster grad_blend(geometry.width, geometry.height, 1);
  for (std::size_t l = 0; l < levels; ++l) {
    const Raster& target = targets[l];
    const Raster& weight = weights[l];
    if (!target.same_shape(blended) || !weight.same_shape(blended)) {
      throw ContractError("align loss: target/weight raster shape mismatch");
    }
    const Raster smoothed = box_filter(blended, windows[l]);
    Raster grad_level(geometry.width, geometry.height, 1);
    for (int y = 0; y < geometry.height; ++y) {
      for (int x = 0; x < geometry.width; ++x) {
        if (!included(x, y)) continue;
        const double diff = smoothed.at(x, y, 0) - target.at(x, y, 0);
        loss += lambdas[l] * weight.at(x, y, 0) * diff * diff;
        grad_level.at(x, y, 0) = 2.0 * lambdas[l] * weight.at(x, y, 0) * diff;
      }
    }
    if (grads != nullptr) {
      const Raster back = box_filter_adjoint(grad_level, windows[l]);
      for (std::size_t i = 0; i < grad_blend.data.size(); ++i) {
        grad_blend.data[i] += back.data[i];
      }
    }
  }
  if (grads != nullptr) {
    render_values_backward(geometry, scene, cached_entropies, 1, grad_blend, grads, nullptr);
  }
  return loss;
}

double ssim(const Raster& x, const Raster& y, Raster* grad_x) {
  if (!x.same_shape(y)) throw ContractError("ssim: raster shapes disagree");
  static const std::vector<double> taps = gaussian_taps(11, 1.5);
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  const Raster mu_x = conv_separable(x, taps);
  const Raster mu_y = conv_separable(y, taps);
  Raster xx = x, yy = y, xy = x;
  for (std::size_t i = 0; i < xx.data.size(); ++i) {
    xx.data[i] = x.data[i] * x.data[i];
    yy.data[i] = y.data[i] * y.data[i];
    xy.data[i] = x.data[i] * y.data[i];
  }
  const Raster m_xx = conv_separable(xx, taps);
  const Raster m_yy = conv_separable(yy, taps);
  const Raster m_xy = conv_separable(xy, taps);

  const double weight = 1.0 / static_cast<double>(x.data.size());
  double total = 0.0;
  Raster f_mu(x.width, x.height, x.channels);
  Raster f_xx(x.width, x.height, x.channels);
  Raster f_xy(x.width, x.height, x.channels);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double ux = mu_x.data[i], uy = mu_y.data[i];
    const double var_x = m_xx.data[i] - ux * ux;
    const double var_y = m_yy.data[i] - uy * uy;
    const double cov = m_xy.data[i] - ux * uy;
    const double a1 = 2.0 * ux * uy + kC1;
    const double a2 = 2.0 * cov + kC2;
    const double b1 = ux * ux + uy * uy + kC1;
    const double b2 = var_x + var_y + kC2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (grad_x == nullptr) continue;
    const double ds_da1 = a2 / (b1 * b2);
    const double ds_da2 = a1 / (b1 * b2);
    const double ds_db1 = -s / b1;
    const double ds_db2 = -s / b2;
    // Independent convolved fields are (mu_x, m_xx, m_xy); var_x and cov are
    // derived from them, contributing the -2*ux and -uy terms below.
    f_mu.data[i] = weight * (ds_da1 * 2.0 * uy + ds_db1 * 2.0 * ux +
                             ds_db2 * -2.0 * ux + ds_da2 * 2.0 * -uy);
    f_xx.data[i] = weight * ds_db2;
    f_xy.data[i] = weight * ds_da2 * 2.0;
  }
  if (grad_x != nullptr) {
    const Raster g_mu = conv_separable_adjoint(f_mu, taps);
    const Raster g_xx = conv_separable_adjoint(f_xx, taps);
    const Raster g_xy = conv_separable_adjoint(f_xy, taps);
    *grad_x = Raster(x.width, x.height, x.channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      grad_x->data[i] =
          g_mu.data[i] + 2.0 * x.data[i] * g_xx.data[i] + y.data[i] * g_xy.data[i];
    }
  }
  return total * weight;
}

double photometric_loss(const Raster& rendered, const Raster& target, double ssim_mix,
                        Raster* grad_rendered) {
  if (!rendered.same_shape(target)) {
    throw ContractError("photometric loss: raster shapes disagree");
  }
  if (!(ssim_mix >= 0.0 && ssim_mix <= 1.0)) {
    throw UsageError("photometric loss: ssim_mix must lie in [0, 1]");
  }
  const double inv_n = 1.0 / static_cast<double>(rendered.data.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    l1 += std::abs(rendered.data[i] - target.data[i]);
  }
  l1 *= inv_n;

  double ssim_value = 0.0;
  Raster ssim_grad;
  if (ssim_mix > 0.0) {
    ssim_value = ssim(rendered, target, grad_rendered != nullptr ? &ssim_grad : nullptr);
  }
  if (grad_rendered != nullptr) {
    *grad_rendered = Raster(rendered.width, rendered.height, rendered.channels);
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
      const double diff = rendered.data[i] - target.data[i];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      double g = (1.0 - ssim_mix) * sgn * inv_n;
      if (ssim_mix > 0.0) g -= ssim_mix * ssim_grad.data[i];
      grad_rendered->data[i] = g;
    }
  }
  return (1.0 - ssim_mix) * l1 + ssim_mix * (1.0 - ssim_value);
}

LossBreakdown total_loss(const LossInputs& in, const LossConfig& config) {
  if (in.scene == nullptr) throw ContractError("total_loss: scene is required");
  const Scene& scene = *in.scene;
  const std::size_t n = scene.primitives.size();
  LossBreakdown out;
  out.grads = SceneGrads(n);

  if (config.sparsity) {
    if (in.graph == nullptr) throw ContractError("total_loss: sparsity needs a neighbor graph");
    std::vector<double> ones;
    std::span<const double> weights = in.image_weights;
    if (weights.empty()) {
      ones.assign(n, 1.0);
      weights = ones;
    }
    SceneGrads term(n);
    out.sparsity = sparsity_loss(scene, *in.graph, in.eta, weights, &term);
    out.grads.accumulate(term, config.lambda_sparsity);
  }

  const bool needs_geometry = config.photometric || config.align || config.normal;
  std::vector<RenderGeometry> geometries;
  if (needs_geometry) {
    geometries.reserve(in.cameras.size());
    for (const Camera& cam : in.cameras) {
      geometries.push_back(build_render_geometry(scene, cam));
    }
  }

  if (config.photometric) {
    if (in.target_images.size() != in.cameras.size()) {
      throw ContractError("total_loss: photometric needs one target image per camera");
    }
    std::vector<double> colors(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) colors[i * 3 + c] = scene.primitives[i].color[c];
    }
    std::vector<double> grad_colors;
    for (std::size_t cam = 0; cam < in.cameras.size(); ++cam) {
      const Raster image = render_values(geometries[cam], scene, colors, 3, nullptr);
      Raster grad_image;
      out.photometric +=
          photometric_loss(image, in.target_images[cam], config.ssim_mix, &grad_image);
      render_values_backward(geometries[cam], scene, colors, 3, grad_image, &out.grads,
                             &grad_colors);
      for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) out.grads.color[i][c] += grad_colors[i * 3 + c];
      }
    }
  }

  if (config.depth || config.normal) {
    if (in.rays == nullptr || in.rays->size() != in.cameras.size()) {
      throw ContractError("total_loss: depth/normal need one ray bundle per camera");
    }
  }
  if (config.depth) {
    for (const auto& bundle : *in.rays) {
      out.depth += depth_loss(scene, bundle, &out.grads);
    }
  }
  if (config.normal) {
    for (std::size_t cam = 0; cam < in.cameras.size(); ++cam) {
      Raster coverage;
      const Raster depth_map = render_depth(geometries[cam], scene, &coverage);
      out.normal += normal_loss(scene, (*in.rays)[cam], geometries[cam], depth_map,
                                coverage, &out.grads);
    }
  }

  if (config.align) {
    if (in.align_targets == nullptr || in.align_weights == nullptr ||
        in.align_targets->size() != in.cameras.size() ||
        in.align_weights->size() != in.cameras.size()) {
      throw ContractError("total_loss: align needs per-camera target/weight pyramids");
    }
    for (std::size_t cam = 0; cam < in.cameras.size(); ++cam) {
      SceneGrads term(n);
      out.align += align_loss(geometries[cam], scene, in.cached_entropies, in.align_windows,
                              (*in.align_targets)[cam], (*in.align_weights)[cam],
                              in.lambda_levels, &term);
      out.grads.accumulate(term, config.lambda_align);
    }
  }

  out.total = out.photometric + config.lambda_sparsity * out.sparsity +
              config.lambda_align * out.align + out.depth + out.normal;
  return out;
}

}  // namespace egs
