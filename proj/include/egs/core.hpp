#pragma once

#include <span>
#include <vector>

#include "egs/error.hpp"
#include "egs/math_util.hpp"

namespace egs {

// Anisotropic 3D Gaussian primitive.
struct GaussianPrimitive {
  Vec3 center = Vec3::Zero();
  Vec3 scale = Vec3::Ones();        // per-axis standard deviations, > 0
  Vec4 rotation = Vec4(1, 0, 0, 0); // unit quaternion (w, x, y, z)
  double opacity = 1.0;             // in [0, 1]
  Vec3 color = Vec3(0.5, 0.5, 0.5); // in [0, 1]^3
  double weight = 1.0;              // mixture weight, >= 0
};

// A collection of primitives plus the global geometric parameters that the
// redundancy index and adaptive thresholds are expressed in.
struct Scene {
  std::vector<GaussianPrimitive> primitives;
  double sigma_min = 0.1;       // minimum scale; scales are clamped up to this
  double epsilon_tangent = 0.0; // surface-offset threshold, default 0.5*sigma_min
  double decay_rate = 0.0;      // redundancy decay, default 1/sigma_min^2

  Scene() = default;
  // Passing epsilon_tangent <= 0 or decay_rate <= 0 selects the defaults.
  Scene(std::vector<GaussianPrimitive> prims, double sigma_min_,
        double epsilon_tangent_ = -1.0, double decay_rate_ = -1.0);

  std::size_t size() const { return primitives.size(); }
};

// Pinhole camera. Camera space looks down +z; pixel centers sit at integer
// coordinates, px = fx * X/Z + cx.
struct Camera {
  Mat4 world_to_camera = Mat4::Identity();
  Vec2 focal = Vec2(100.0, 100.0);           // (fx, fy) in pixels
  Vec2 principal_point = Vec2(50.0, 50.0);   // (cx, cy) in pixels
  Eigen::Vector2i resolution = {100, 100};   // (width, height)

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  // Throws ContractError when the rotation block is not orthonormal
  // (within 1e-9) or the resolution is not positive.
  void validate() const;
};

inline constexpr double kNearPlane = 1e-4;

// Sigma = R * diag(scale)^2 * R^T.
Mat3 covariance(const GaussianPrimitive& p);

// Unnormalized density exp(-0.5 * (x - mu)^T Sigma^{-1} (x - mu)); equals 1
// at the center.
double evaluate_density(const GaussianPrimitive& p, const Vec3& point);

struct NormalResult {
  Vec3 normal = Vec3(0, 0, 1);
  bool degenerate = false;
  int axis = 2;       // rotation column index the normal came from
  double sign = 1.0;  // orientation factor applied to that column
};

// Eigenvector of the covariance for the smallest eigenvalue, unit norm, with
// the largest-magnitude component made positive (ties broken by lowest
// index). Isotropic covariances return +z with degenerate = true.
NormalResult principal_normal(const GaussianPrimitive& p);

struct Projection2D {
  Mat2 cov = Mat2::Identity();    // 2x2 projected covariance
  Vec2 center_px = Vec2::Zero();  // projected center in pixel coordinates
  double depth = 0.0;             // camera-space z
};

// Perspective projection of the covariance through the local affine
// approximation: Sigma' = J W Sigma W^T J^T. Throws NumericError when the
// center is behind the near plane.
Projection2D project_covariance(const GaussianPrimitive& p, const Camera& cam);

struct BlendItem {
  double depth = 0.0;
  Eigen::VectorXd value;  // n-channel payload
  double omega = 0.0;     // per-item opacity contribution in [0, 1]
};

struct BlendResult {
  Eigen::VectorXd value;
  std::vector<double> effective_weights;  // omega_i * prod_{j<i} (1 - omega_j)
};

// Front-to-back compositing over a depth-ordered list. Throws ContractError
// when depths are unsorted, omegas fall outside [0, 1], or payload
// dimensions disagree.
BlendResult alpha_blend(std::span<const BlendItem> contributions);

}  // namespace egs
