#include "mvalign/geometry.hpp"

#include <cmath>

namespace mvalign {

Mat3 so3_hat(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Mat3 so3_exp(const Vec3& axis_angle) {
  const double theta2 = axis_angle.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a;  // sin(theta) / theta
  double b;  // (1 - cos(theta)) / theta^2
  if (theta < 1e-4) {
    a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
    b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k = so3_hat(axis_angle);
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 so3_log(const Mat3& rotation) {
  // Quaternion route: stable over the whole angle range including near pi.
  Eigen::Quaterniond q(rotation);
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const Vec3 v(q.x(), q.y(), q.z());
  const double vnorm = v.norm();
  if (vnorm < 1e-12) {
    return 2.0 * v;  // small-angle limit of 2 * atan2(|v|, w) * v/|v|
  }
  const double theta = 2.0 * std::atan2(vnorm, q.w());
  Vec3 axis = v / vnorm;
  if (q.w() < 1e-12) {
    // Angle is pi: both axis signs describe the same rotation. Pick the one
    // whose largest-magnitude component is positive.
    int max_idx = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(axis[i]) > std::abs(axis[max_idx])) max_idx = i;
    }
    if (axis[max_idx] < 0.0) axis = -axis;
  }
  return theta * axis;
}

PoseSE3 PoseSE3::compose(const PoseSE3& other) const {
  PoseSE3 out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

PoseSE3 PoseSE3::inverse() const {
  PoseSE3 out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

Mat4 PoseSE3::matrix() const {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation;
  m.block<3, 1>(0, 3) = translation;
  return m;
}

PoseSE3 PoseSE3::from_matrix(const Mat4& m) {
  PoseSE3 out;
  out.rotation = m.block<3, 3>(0, 0);
  out.translation = m.block<3, 1>(0, 3);
  return out;
}

bool PoseSE3::has_valid_rotation(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

ScalarMap ScalarMap::constant(int w, int h, double value) {
  ScalarMap m;
  m.width = w;
  m.height = h;
  m.values = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(w) * h, value);
  return m;
}

PointMap PointMap::zeros(int w, int h) {
  PointMap m;
  m.width = w;
  m.height = h;
  m.points = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(w) * h);
  return m;
}

MaskMap MaskMap::constant(int w, int h, bool value) {
  MaskMap m;
  m.width = w;
  m.height = h;
  m.values.assign(static_cast<std::size_t>(w) * h, value ? 1 : 0);
  return m;
}

int MaskMap::count() const {
  int n = 0;
  for (std::uint8_t v : values) n += (v != 0);
  return n;
}

PointMap back_project(const DepthMap& depth, const CameraIntrinsics& intr, const PoseSE3& pose) {
  if (depth.width != intr.width || depth.height != intr.height) {
    throw InvalidInputError("back_project: depth map is " + std::to_string(depth.width) + "x" +
                            std::to_string(depth.height) + " but intrinsics expect " +
                            std::to_string(intr.width) + "x" + std::to_string(intr.height));
  }
  if (!(intr.focal > 0.0)) {
    throw InvalidInputError("back_project: focal length must be positive");
  }
  PointMap out = PointMap::zeros(depth.width, depth.height);
  const double inv_f = 1.0 / intr.focal;
  const double cx = 0.5 * intr.width;
  const double cy = 0.5 * intr.height;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const int p = v * depth.width + u;
      const double d = depth.values[p];
      const Vec3 cam(d * (u - cx) * inv_f, d * (v - cy) * inv_f, d);
      out.points.col(p) = pose.apply(cam);
    }
  }
  return out;
}

SimilarityTransform align_similarity(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                                     const std::vector<double>& weights) {
  if (a.size() != b.size() || a.size() != weights.size()) {
    throw InvalidInputError("align_similarity: size mismatch between point sets and weights");
  }
  double wsum = 0.0;
  int effective = 0;
  Vec3 mu_a = Vec3::Zero();
  Vec3 mu_b = Vec3::Zero();
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(weights[k] > 0.0)) continue;
    wsum += weights[k];
    ++effective;
    mu_a += weights[k] * a[k];
    mu_b += weights[k] * b[k];
  }
  if (effective < 3 || !(wsum > 0.0)) {
    throw DegenerateInputError("align_similarity: need at least 3 points with positive weight, got " +
                               std::to_string(effective));
  }
  mu_a /= wsum;
  mu_b /= wsum;

  Mat3 cross = Mat3::Zero();
  double var_a = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(weights[k] > 0.0)) continue;
    const Vec3 da = a[k] - mu_a;
    const Vec3 db = b[k] - mu_b;
    cross += weights[k] * db * da.transpose();
    var_a += weights[k] * da.squaredNorm();
  }
  cross /= wsum;
  var_a /= wsum;

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[1] > sv[0] * 1e-12) || !(var_a > 0.0)) {
    throw DegenerateInputError("align_similarity: collinear or rank-deficient point support");
  }
  Vec3 d_fix = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d_fix[2] = -1.0;  // flip the smallest singular direction
  }
  SimilarityTransform out;
  out.rotation = svd.matrixU() * d_fix.asDiagonal() * svd.matrixV().transpose();
  out.scale = sv.dot(d_fix) / var_a;
  if (!(out.scale > 0.0)) {
    throw DegenerateInputError("align_similarity: non-positive optimal scale");
  }
  // mu_b = scale * (R mu_a + t)
  out.translation = mu_b / out.scale - out.rotation * mu_a;
  return out;
}

}  // namespace mvalign
