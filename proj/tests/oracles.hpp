#pragma once
// Slow, obviously-correct reference computations. Nothing here calls into
// the library beyond plain data types.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "dfc/geometry.hpp"

namespace oracle {

using Index = Eigen::Index;

inline Eigen::Matrix3d rodrigues(Eigen::Vector3d axis, double angle) {
  axis.normalize();
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

inline Eigen::Vector3d random_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline dfc::RigidTransform random_tf(std::mt19937_64& rng, double t_range = 1.0) {
  std::uniform_real_distribution<double> a(0.0, 3.0);
  std::uniform_real_distribution<double> u(-t_range, t_range);
  dfc::RigidTransform tf;
  tf.rotation = rodrigues(random_axis(rng), a(rng));
  tf.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return tf;
}

inline Eigen::Matrix3Xd random_points(Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::Matrix3Xd p(3, n);
  for (Index c = 0; c < n; ++c)
    for (int r = 0; r < 3; ++r) p(r, c) = u(rng);
  return p;
}

inline Eigen::Matrix3Xd transform(const dfc::RigidTransform& tf, const Eigen::Matrix3Xd& p) {
  Eigen::Matrix3Xd out(3, p.cols());
  for (Index i = 0; i < p.cols(); ++i) out.col(i) = tf.rotation * p.col(i) + tf.translation;
  return out;
}

// Rotation angle between two rotations from the quaternion of R_a^T R_b,
// which stays accurate for tiny angles.
inline double angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  Eigen::Quaterniond q(Eigen::Matrix3d(a.transpose() * b));
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

inline double so3_orth_error(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).norm();
}

// Weighted residual energy sum_i w_i ||R x_i + t - y_i||^2.
inline double energy(const Eigen::Matrix3d& r, const Eigen::Vector3d& t, const Eigen::Matrix3Xd& x,
                     const Eigen::Matrix3Xd& y, const Eigen::VectorXd& w) {
  double e = 0.0;
  for (Index i = 0; i < x.cols(); ++i) e += w(i) * (r * x.col(i) + t - y.col(i)).squaredNorm();
  return e;
}

// Sorted (sq_dist, index) k-NN by full scan, with optional excluded index.
inline std::vector<std::pair<double, Index>> knn(const Eigen::MatrixXd& pts, const Eigen::VectorXd& q,
                                                 int k, Index exclude = -1) {
  std::vector<std::pair<double, Index>> all;
  for (Index j = 0; j < pts.cols(); ++j) {
    if (j == exclude) continue;
    double s = 0.0;
    for (Index d = 0; d < pts.rows(); ++d) s += (pts(d, j) - q(d)) * (pts(d, j) - q(d));
    all.emplace_back(s, j);
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
  return all;
}

// Dominant eigenvector of a symmetric matrix by dense decomposition.
inline std::pair<double, Eigen::VectorXd> dominant_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Index last = m.rows() - 1;
  return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}

inline std::size_t naive_inlier_count(const dfc::RigidTransform& tf, const Eigen::Matrix3Xd& x,
                                      const Eigen::Matrix3Xd& y, double tau) {
  std::size_t c = 0;
  for (Index i = 0; i < x.cols(); ++i) {
    double s = 0.0;
    for (int r = 0; r < 3; ++r) {
      double v = tf.translation(r) - y(r, i);
      for (int k = 0; k < 3; ++k) v += tf.rotation(r, k) * x(k, i);
      s += v * v;
    }
    if (std::sqrt(s) < tau) ++c;
  }
  return c;
}

// Voxel binning through an ordered map keyed by integer cell coordinates.
inline std::map<std::tuple<long, long, long>, std::pair<Eigen::Vector3d, int>> voxel_bins(
    const Eigen::Matrix3Xd& p, double voxel) {
  std::map<std::tuple<long, long, long>, std::pair<Eigen::Vector3d, int>> bins;
  for (Index i = 0; i < p.cols(); ++i) {
    auto key = std::make_tuple(static_cast<long>(std::floor(p(0, i) / voxel)),
                               static_cast<long>(std::floor(p(1, i) / voxel)),
                               static_cast<long>(std::floor(p(2, i) / voxel)));
    auto it = bins.find(key);
    if (it == bins.end()) it = bins.emplace(key, std::make_pair(Eigen::Vector3d::Zero(), 0)).first;
    it->second.first += p.col(i);
    it->second.second += 1;
  }
  return bins;
}

inline double bce(double c, double l) { return -(l * std::log(c) + (1.0 - l) * std::log(1.0 - c)); }

}  // namespace oracle
