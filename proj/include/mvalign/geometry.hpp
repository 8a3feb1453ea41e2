#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mvalign/errors.hpp"

namespace mvalign {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

Mat3 so3_hat(const Vec3& w);

/// Rodrigues exponential; stable for small angles via series expansion.
Mat3 so3_exp(const Vec3& axis_angle);

/// Inverse of so3_exp for rotation angle <= pi. At exactly pi the axis sign is
/// chosen so that its largest-magnitude component is positive.
Vec3 so3_log(const Mat3& rotation);

/// Rigid transform: p -> rotation * p + translation.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  PoseSE3 compose(const PoseSE3& other) const;
  PoseSE3 inverse() const;
  Mat4 matrix() const;
  static PoseSE3 from_matrix(const Mat4& m);
  bool has_valid_rotation(double tol = 1e-9) const;
};

inline PoseSE3 operator*(const PoseSE3& a, const PoseSE3& b) { return a.compose(b); }
inline Vec3 operator*(const PoseSE3& a, const Vec3& p) { return a.apply(p); }

/// Pinhole camera with square pixels and the principal point at the image
/// center (W/2, H/2). Pixel (u, v) has integer coordinates, u in [0, W).
struct CameraIntrinsics {
  double focal = 0.0;
  int width = 0;
  int height = 0;
};

/// H x W scalar field. Entry (u, v) lives at index v * width + u.
struct ScalarMap {
  int width = 0, height = 0;
  Eigen::ArrayXd values;

  static ScalarMap constant(int w, int h, double value);
  int size() const { return width * height; }
  double operator()(int u, int v) const { return values[v * width + u]; }
  double& operator()(int u, int v) { return values[v * width + u]; }
};

/// Depth maps are positive scalar fields; the value is the camera-frame z.
using DepthMap = ScalarMap;

/// H x W field of 3D points, one column per pixel, index v * width + u.
struct PointMap {
  int width = 0, height = 0;
  Eigen::Matrix3Xd points;

  static PointMap zeros(int w, int h);
  int size() const { return width * height; }
  Eigen::Matrix3Xd::ColXpr col(int p) { return points.col(p); }
  Eigen::Matrix3Xd::ConstColXpr col(int p) const { return points.col(p); }
};

struct MaskMap {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;

  static MaskMap constant(int w, int h, bool value);
  int size() const { return width * height; }
  bool operator()(int u, int v) const { return values[v * width + u] != 0; }
  bool at(int p) const { return values[p] != 0; }
  int count() const;
};

/// Back-projects a depth map through the pinhole model and applies the
/// camera-to-world pose: pixel (u, v) with centered coordinates
/// u' = u - W/2, v' = v - H/2 maps to
///   pose * ( D * u'/f, D * v'/f, D ).
/// Throws InvalidInputError when the map dimensions disagree with the
/// intrinsics.
PointMap back_project(const DepthMap& depth, const CameraIntrinsics& intr, const PoseSE3& pose);

struct SimilarityTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
};

/// Weighted closed-form similarity fit minimizing
///   sum_k w_k || scale * (R a_k + t) - b_k ||^2.
/// Reflections are repaired by flipping the smallest singular direction so the
/// result is always a proper rotation. Throws DegenerateInputError when fewer
/// than 3 points carry positive weight or the support is collinear.
SimilarityTransform align_similarity(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                                     const std::vector<double>& weights);

}  // namespace mvalign
