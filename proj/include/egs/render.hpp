#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "egs/core.hpp"
#include "egs/grads.hpp"
#include "egs/neighborhood.hpp"
#include "egs/raster.hpp"

namespace egs {

// One primitive projected to the image plane. `inv_cov` is the inverse of the
// projected 2x2 covariance; `basis` is J*W (the linear map from world offsets
// to screen offsets at the primitive center); `cam_cov` is the camera-space
// 3x3 covariance W*Sigma*W^T.
struct ProjectedSplat {
  bool visible = false;
  Vec2 center_px = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Mat2 inv_cov = Mat2::Identity();
  Vec3 cam_pos = Vec3::Zero();  // camera-space center (t)
  Mat23 proj_jac = Mat23::Zero();
  Mat3 cam_cov = Mat3::Zero();
  double radius_px = 0.0;
};

// Screen-space scatter of a whole scene: per-pixel contribution lists in
// front-to-back depth order. Splat footprints are truncated where the squared
// Mahalanobis distance exceeds `mahalanobis_cut` (the default keeps the
// boundary density below 1e-13, so finite-difference probes never see a
// primitive pop in or out of a pixel list).
struct PixelContribution {
  std::uint32_t splat = 0;
  double gauss = 0.0;  // exp(-m^2/2) at the pixel center, kept in full precision
};

struct RenderGeometry {
  int width = 0;
  int height = 0;
  Camera camera;
  double mahalanobis_cut = 0.0;
  std::vector<ProjectedSplat> splats;
  std::vector<std::uint32_t> depth_order;          // visible splats, by (depth, index)
  std::vector<std::vector<PixelContribution>> pixels;  // row-major, depth-ordered
};

constexpr double kRenderMahalanobisCut = 60.0;
constexpr double kTransmittanceFloor = 1e-12;

RenderGeometry build_render_geometry(const Scene& scene, const Camera& camera,
                                     double mahalanobis_cut = kRenderMahalanobisCut);

// Front-to-back alpha blend of per-primitive values (channel count
// `channels`, laid out contiguously per primitive). `coverage`, if given,
// receives the blended opacity (1 - final transmittance) per pixel.
Raster render_values(const RenderGeometry& geometry, const Scene& scene,
                     std::span<const double> values, int channels,
                     Raster* coverage = nullptr);

// Reverse-mode pass for render_values. Accumulates into `grads` the gradient
// of sum(grad_output * rendered) with respect to primitive centers, scales,
// rotations, and opacities, and into `grad_values` (if non-null, same layout
// as `values`) the gradient with respect to the blended values.
void render_values_backward(const RenderGeometry& geometry, const Scene& scene,
                            std::span<const double> values, int channels,
                            const Raster& grad_output, SceneGrads* grads,
                            std::vector<double>* grad_values = nullptr);

// Convenience forward renders sharing one geometry.
Raster render_image(const RenderGeometry& geometry, const Scene& scene,
                    Raster* coverage = nullptr);
Raster render_depth(const RenderGeometry& geometry, const Scene& scene,
                    Raster* coverage = nullptr);

// Screen-space field of per-primitive scalar values (e.g. cached neighborhood
// entropies) blended with the live weights and box-smoothed per window size.
struct EntropyMapRender {
  Raster blended;            // raw alpha-blended scalar field
  Raster coverage;           // blended opacity per pixel
  std::vector<Raster> smoothed;  // one per requested window
};

EntropyMapRender render_entropy_levels(const RenderGeometry& geometry, const Scene& scene,
                                       std::span<const double> per_primitive_values,
                                       std::span<const int> windows);

// Fresh neighborhood entropies -> single smoothed screen-space map plus
// coverage mask.
EntropyMapRender render_entropy_map(const Scene& scene, const NeighborGraph& graph,
                                    const Camera& camera, int window);

}  // namespace egs
