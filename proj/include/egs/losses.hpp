#pragma once

#include <span>
#include <vector>

#include "egs/core.hpp"
#include "egs/grads.hpp"
#include "egs/neighborhood.hpp"
#include "egs/raster.hpp"
#include "egs/ray.hpp"
#include "egs/render.hpp"

namespace egs {

struct LossConfig {
  bool photometric = true;
  bool sparsity = true;
  bool depth = true;
  bool normal = true;
  bool align = true;
  double lambda_sparsity = 0.1;
  double lambda_align = 0.05;
  double ssim_mix = 0.2;  // photometric = (1-mix)*L1 + mix*(1-SSIM)
};

struct LossBreakdown {
  double photometric = 0.0;
  double sparsity = 0.0;
  double depth = 0.0;
  double normal = 0.0;
  double align = 0.0;
  double total = 0.0;
  SceneGrads grads;
};

// sum_i w_i * max(0, H_i - eta_i)^2 over all neighborhoods, where H_i is the
// live opacity entropy of neighborhood i (K+1 members) and eta_i, w_i are
// supplied (typically cached) constants. Gradients flow into member opacities.
double sparsity_loss(const Scene& scene, const NeighborGraph& graph,
                     std::span<const double> eta, std::span<const double> weights,
                     SceneGrads* grads);

// Pairwise blend-weighted depth variance along each ray:
//   sum_{i != j} omega_i omega_j (d_i - d_j)^2 = 2 * (A*C - B^2)
// with moments A = sum omega, B = sum omega*d, C = sum omega*d^2.
// Rays with fewer than two contributors are skipped.
double depth_loss(const Scene& scene, std::span<const PixelRay> rays, SceneGrads* grads);

// sum_i omega_i (1 - n_i . n_ref) per ray, where n_i is the primitive's
// principal normal and n_ref comes from central differences of the rendered
// depth map (oriented toward the camera, treated as constant). Pixels whose
// 5-point stencil is not fully covered are skipped. The primitive normal is
// NOT re-oriented: an anti-aligned primitive contributes factor 2.
double normal_loss(const Scene& scene, std::span<const PixelRay> rays,
                   const RenderGeometry& geometry, const Raster& depth_map,
                   const Raster& coverage, SceneGrads* grads);

// sum_l lambda_l sum_px W_l(px) * (H_l(px) - E_l(px))^2 over covered pixels,
// where H_l is the box-smoothed screen blend of the cached per-primitive
// entropies. Gradients flow through the blend weights only (the cached
// entropies are constants). The covered-pixel set is live coverage > 0 by
// default; passing `mask` (1-channel, nonzero = include) pins it instead,
// which the finite-difference checker uses because the indicator itself is
// not differentiable.
double align_loss(const RenderGeometry& geometry, const Scene& scene,
                  std::span<const double> cached_entropies, std::span<const int> windows,
                  std::span<const Raster> targets, std::span<const Raster> weights,
                  std::span<const double> lambdas, SceneGrads* grads,
                  const Raster* mask = nullptr);

// (1-mix)*L1 + mix*(1-SSIM) between two rasters on a [0,1] value scale.
// SSIM uses an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2.
// If grad_rendered is non-null it receives d(loss)/d(rendered).
double photometric_loss(const Raster& rendered, const Raster& target, double ssim_mix,
                        Raster* grad_rendered);

// Mean SSIM and its gradient with respect to the first image.
double ssim(const Raster& x, const Raster& y, Raster* grad_x = nullptr);

struct LossInputs {
  const Scene* scene = nullptr;
  const NeighborGraph* graph = nullptr;           // sparsity + align entropies
  std::span<const double> eta;                    // per-primitive thresholds
  std::span<const double> image_weights;          // empty -> all ones
  std::span<const double> cached_entropies;       // align source values
  std::span<const Camera> cameras;
  std::span<const Raster> target_images;          // per camera (photometric)
  const std::vector<std::vector<PixelRay>>* rays = nullptr;  // per camera
  std::span<const int> align_windows;
  const std::vector<std::vector<Raster>>* align_targets = nullptr;  // [camera][level]
  const std::vector<std::vector<Raster>>* align_weights = nullptr;  // [camera][level]
  std::span<const double> lambda_levels;
};

// total = photometric + lambda_sparsity*sparsity + lambda_align*align
//         + depth + normal
// Disabled terms are exactly zero and contribute no gradient. Per-term values
// in the breakdown are unscaled; grads carry the scaled sum.
LossBreakdown total_loss(const LossInputs& in, const LossConfig& config);

}  // namespace egs
