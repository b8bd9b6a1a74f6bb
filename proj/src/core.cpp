#include "egs/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace egs {

Scene::Scene(std::vector<GaussianPrimitive> prims, double sigma_min_,
             double epsilon_tangent_, double decay_rate_)
    : primitives(std::move(prims)), sigma_min(sigma_min_) {
  if (!(sigma_min > 0.0)) throw UsageError("scene sigma_min must be positive");
  epsilon_tangent = epsilon_tangent_ > 0.0 ? epsilon_tangent_ : 0.5 * sigma_min;
  decay_rate = decay_rate_ > 0.0 ? decay_rate_ : 1.0 / (sigma_min * sigma_min);
  for (auto& p : primitives) {
    for (int a = 0; a < 3; ++a) p.scale[a] = std::max(p.scale[a], sigma_min);
  }
}

void Camera::validate() const {
  const Mat3 r = rotation();
  const Mat3 err = r * r.transpose() - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9) {
    throw ContractError("camera rotation block is not orthonormal");
  }
  if (resolution.x() <= 0 || resolution.y() <= 0) {
    throw ContractError("camera resolution must be positive");
  }
}

Mat3 covariance(const GaussianPrimitive& p) {
  const Mat3 r = rotation_matrix(p.rotation);
  const Mat3 m = r * p.scale.asDiagonal();
  return m * m.transpose();
}

double evaluate_density(const GaussianPrimitive& p, const Vec3& point) {
  // Sigma^{-1} = R diag(1/s^2) R^T, valid because scales are strictly positive.
  const Mat3 r = rotation_matrix(p.rotation);
  const Vec3 local = r.transpose() * (point - p.center);
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double s = p.scale[a];
    if (!(s > 0.0)) throw NumericError("primitive scale must be positive");
    q += (local[a] * local[a]) / (s * s);
  }
  return std::exp(-0.5 * q);
}

NormalResult principal_normal(const GaussianPrimitive& p) {
  // The covariance eigenvectors are the rotated scale axes, so the smallest
  // eigenvalue's eigenvector is the rotation column of the smallest scale.
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (p.scale[a] < p.scale[axis]) axis = a;
  }
  double second = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (a != axis) second = std::min(second, p.scale[a]);
  }
  const double smax = p.scale.maxCoeff();
  NormalResult out;
  if (second - p.scale[axis] <= 1e-9 * smax) {
    out.degenerate = true;
    out.normal = Vec3(0, 0, 1);
    return out;
  }
  Vec3 n = rotation_matrix(p.rotation).col(axis);
  int big = 0;
  for (int a = 1; a < 3; ++a) {
    if (std::abs(n[a]) > std::abs(n[big])) big = a;
  }
  out.axis = axis;
  out.sign = n[big] < 0.0 ? -1.0 : 1.0;
  out.normal = (out.sign * n).normalized();
  return out;
}

Projection2D project_covariance(const GaussianPrimitive& p, const Camera& cam) {
  const Mat3 w = cam.rotation();
  const Vec3 t = w * p.center + cam.translation();
  if (!(t.z() > kNearPlane)) {
    throw NumericError("primitive center is behind the camera near plane");
  }
  const double fx = cam.focal.x(), fy = cam.focal.y();
  const double iz = 1.0 / t.z();
  Mat23 j;
  j << fx * iz, 0.0, -fx * t.x() * iz * iz,
      0.0, fy * iz, -fy * t.y() * iz * iz;
  const Mat23 m = j * w;
  Projection2D out;
  out.cov = m * covariance(p) * m.transpose();
  out.center_px = Vec2(fx * t.x() * iz + cam.principal_point.x(),
                       fy * t.y() * iz + cam.principal_point.y());
  out.depth = t.z();
  return out;
}

BlendResult alpha_blend(std::span<const BlendItem> contributions) {
  BlendResult out;
  if (contributions.empty()) {
    out.value = Eigen::VectorXd::Zero(0);
    return out;
  }
  const Eigen::Index dim = contributions.front().value.size();
  out.value = Eigen::VectorXd::Zero(dim);
  out.effective_weights.reserve(contributions.size());
  double transmittance = 1.0;
  double prev_depth = -std::numeric_limits<double>::infinity();
  for (const BlendItem& item : contributions) {
    if (item.depth < prev_depth) {
      throw ContractError("alpha_blend contributions must be depth-ordered");
    }
    prev_depth = item.depth;
    if (item.value.size() != dim) {
      throw ContractError("alpha_blend payload dimensions disagree");
    }
    if (!(item.omega >= 0.0 && item.omega <= 1.0)) {
      throw ContractError("alpha_blend omega outside [0, 1]");
    }
    const double eff = item.omega * transmittance;
    out.value += item.value * eff;
    out.effective_weights.push_back(eff);
    transmittance *= (1.0 - item.omega);
  }
  return out;
}

}  // namespace egs
