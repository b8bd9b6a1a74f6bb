#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace egs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kHalfLog2PiE = 1.4189385332046727;  // 0.5*ln(2*pi*e)

// Rotation matrix from a quaternion (w, x, y, z). The quaternion is
// normalized internally, so callers may pass non-unit 4-vectors.
Mat3 rotation_matrix(const Vec4& q);

// Derivatives of rotation_matrix with respect to the four raw quaternion
// components, including the internal-normalization chain rule.
std::array<Mat3, 4> rotation_matrix_grads(const Vec4& q);

// Maps a gradient with respect to a covariance built as R * diag(s^2) * R^T
// back to gradients with respect to the scale 3-vector and quaternion.
// grad_cov holds independent per-entry partials (callers accumulate both
// (i,j) and (j,i) when the use is symmetric). Outputs are overwritten.
void covariance_chain(const Vec3& scale, const Vec4& rotation,
                      const Mat3& grad_cov, Vec3* grad_scale, Vec4* grad_rotation);

inline double sigmoid(double u) {
  if (u >= 0.0) {
    const double e = std::exp(-u);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Deterministic RNG wrapper used by scene generators and noise models.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }
  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
  }
  std::uint64_t integer() { return gen_(); }
  int integer(int lo, int hi) {  // inclusive bounds
    std::uniform_int_distribution<int> d(lo, hi);
    return d(gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace egs
