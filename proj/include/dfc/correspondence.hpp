#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "dfc/geometry.hpp"

namespace dfc {

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// N putative matches x_i <-> y_i stored column-wise, plus the per-match data
/// that later stages fill in: embedded features (N x D), confidences in
/// [0, 1] and optional ground-truth inlier labels.
struct CorrespondenceSet {
  Eigen::Matrix3Xd src;
  Eigen::Matrix3Xd dst;
  Eigen::MatrixXd features;
  Eigen::VectorXd confidences;
  std::vector<std::uint8_t> labels;

  Eigen::Index size() const { return src.cols(); }

  /// The match as a point in 6-D: [x^T, y^T]^T.
  Vec6 as_6d(Eigen::Index i) const;
  /// All matches as a 6 x N matrix.
  Eigen::Matrix<double, 6, Eigen::Dynamic> stacked_6d() const;

  /// Throws ShapeMismatch when the filled-in members disagree with N.
  void validate() const;

  /// Gathers the listed rows, carrying every populated member along.
  CorrespondenceSet select(std::span<const Eigen::Index> indices) const;

  double inlier_fraction() const;
};

}  // namespace dfc
