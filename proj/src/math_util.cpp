#include "egs/math_util.hpp"

#include "egs/error.hpp"

namespace egs {

namespace {

Mat3 rotation_from_unit(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

// Partials of rotation_from_unit with respect to the unit components.
std::array<Mat3, 4> rotation_grads_unit(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> g;
  g[0] << 0, -z, y,
          z, 0, -x,
          -y, x, 0;
  g[1] << 0, y, z,
          y, -2 * x, -w,
          z, w, -2 * x;
  g[2] << -2 * y, x, w,
          x, 0, z,
          -w, z, -2 * y;
  g[3] << -2 * z, -w, x,
          w, -2 * z, y,
          x, y, 0;
  for (auto& m : g) m *= 2.0;
  return g;
}

}  // namespace

Mat3 rotation_matrix(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw NumericError("rotation quaternion has zero norm");
  return rotation_from_unit(q / n);
}

std::array<Mat3, 4> rotation_matrix_grads(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw NumericError("rotation quaternion has zero norm");
  const Vec4 u = q / n;
  const std::array<Mat3, 4> gu = rotation_grads_unit(u);
  // d u_a / d q_b = (delta_ab - u_a u_b) / n
  std::array<Mat3, 4> g;
  for (int b = 0; b < 4; ++b) {
    Mat3 acc = Mat3::Zero();
    for (int a = 0; a < 4; ++a) {
      const double duda = ((a == b) ? 1.0 : 0.0) - u[a] * u[b];
      acc += gu[a] * (duda / n);
    }
    g[b] = acc;
  }
  return g;
}

void covariance_chain(const Vec3& scale, const Vec4& rotation,
                      const Mat3& grad_cov, Vec3* grad_scale, Vec4* grad_rotation) {
  const Mat3 r = rotation_matrix(rotation);
  const Mat3 d = scale.array().square().matrix().asDiagonal();
  // Sigma = R D R^T.  dL/dD = R^T G R, dL/ds_a = 2 s_a (R^T G R)_{aa}.
  const Mat3 rtgr = r.transpose() * grad_cov * r;
  if (grad_scale) {
    for (int a = 0; a < 3; ++a) (*grad_scale)[a] = 2.0 * scale[a] * rtgr(a, a);
  }
  if (grad_rotation) {
    // dL/dR = (G + G^T) R D, then chain through the quaternion map.
    const Mat3 dldr = (grad_cov + grad_cov.transpose()) * r * d;
    const std::array<Mat3, 4> rg = rotation_matrix_grads(rotation);
    for (int b = 0; b < 4; ++b) {
      (*grad_rotation)[b] = (dldr.array() * rg[b].array()).sum();
    }
  }
}

}  // namespace egs
