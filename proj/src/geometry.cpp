#include "dfc/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace dfc {

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

double PoseError::re_deg() const { return rad2deg(re); }

Vec3 apply(const RigidTransform& tf, const Vec3& p) {
  return tf.rotation * p + tf.translation;
}

Eigen::Matrix3Xd apply(const RigidTransform& tf, const Eigen::Matrix3Xd& points) {
  return (tf.rotation * points).colwise() + tf.translation;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

RigidTransform inverse(const RigidTransform& tf) {
  Mat3 rt = tf.rotation.transpose();
  return {rt, -(rt * tf.translation)};
}

double rotation_error(const Mat3& r_est, const Mat3& r_gt) {
  // Same angle as acos((tr - 1) / 2), but acos loses half the digits near 0;
  // the skew part of the relative rotation carries sin(theta) exactly.
  const Mat3 d = r_est.transpose() * r_gt;
  const double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 v(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  const double s = std::min(v.norm() / 2.0, 1.0);
  return std::atan2(s, c);
}

double translation_error(const Vec3& t_est, const Vec3& t_gt) {
  return (t_est - t_gt).norm();
}

PoseError pose_error(const RigidTransform& est, const RigidTransform& gt) {
  return {rotation_error(est.rotation, gt.rotation),
          translation_error(est.translation, gt.translation)};
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Mat3 random_rotation(Rng& rng) {
  // Normalized 4-D Gaussian quaternion: Haar measure on SO(3). The axis is
  // still uniform on the sphere; a uniform angle would bias toward identity.
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-12);
  return q.normalized().toRotationMatrix();
}

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).norm();
}

bool is_valid_rotation(const Mat3& r, double tol) {
  return r.allFinite() && orthonormality_error(r) < tol &&
         std::abs(r.determinant() - 1.0) < tol;
}

}  // namespace dfc
