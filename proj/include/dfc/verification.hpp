#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"

namespace dfc {

struct Hypothesis {
  RigidTransform transform;
  Eigen::Index inlier_count = 0;
  double mean_inlier_residual = 0.0;
  Eigen::Index subset_seed = 0;
};

struct InlierCount {
  Eigen::Index count = 0;
  double mean_residual = 0.0;
  std::vector<std::uint8_t> mask;
};

/// mask_i = ||tf(x_i) - y_i|| < tau (strict). Throws InvalidArgument for
/// tau <= 0.
InlierCount count_inliers(const RigidTransform& tf, const CorrespondenceSet& corrs, double tau);

/// Same rule restricted to the listed correspondences; the mask is indexed
/// like `members`.
InlierCount count_inliers(const RigidTransform& tf, const CorrespondenceSet& corrs, double tau,
                          std::span<const Eigen::Index> members);

/// True when a should be preferred over b: more inliers, then smaller mean
/// residual, then lower seed.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b);

/// Index of the best hypothesis. Throws EmptyHypothesisSet.
std::size_t select_best(const std::vector<Hypothesis>& hypotheses);

}  // namespace dfc
