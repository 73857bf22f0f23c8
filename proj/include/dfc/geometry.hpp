#pragma once

#include <Eigen/Core>
#include <random>

namespace dfc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rng = std::mt19937_64;

/// Rotation (3x3, SO(3)) plus translation. Maps p to rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  /// Row-major homogeneous 4x4 form.
  Eigen::Matrix4d matrix() const;
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
};

/// Rotation and translation error between an estimate and ground truth.
struct PoseError {
  double re = 0.0;  // radians
  double te = 0.0;

  double re_deg() const;
};

Vec3 apply(const RigidTransform& tf, const Vec3& p);

/// Applies tf to every column of points.
Eigen::Matrix3Xd apply(const RigidTransform& tf, const Eigen::Matrix3Xd& points);

/// compose(a, b) applied to p equals a applied to (b applied to p).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& tf);

/// Angle of r_est^T r_gt, i.e. arccos((tr - 1) / 2), evaluated via atan2 so
/// that tiny angles keep full precision.
double rotation_error(const Mat3& r_est, const Mat3& r_gt);
double translation_error(const Vec3& t_est, const Vec3& t_gt);
PoseError pose_error(const RigidTransform& est, const RigidTransform& gt);

/// Rotation of `angle` radians about `axis` (normalized internally).
Mat3 axis_angle(const Vec3& axis, double angle);

/// Haar-uniform rotation (uniform axis; angle density proportional to
/// 1 - cos(angle)).
Mat3 random_rotation(Rng& rng);

/// Uniformly distributed unit vector.
Vec3 random_unit_vector(Rng& rng);

double orthonormality_error(const Mat3& r);  // ||R^T R - I||_F
bool is_valid_rotation(const Mat3& r, double tol = 1e-9);

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace dfc
