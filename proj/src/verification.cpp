#include "dfc/verification.hpp"

#include "dfc/error.hpp"

namespace dfc {
namespace {

template <typename IndexFn>
InlierCount count_impl(const RigidTransform& tf, const CorrespondenceSet& corrs, double tau,
                       std::size_t n, IndexFn index_of) {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  InlierCount out;
  out.mask.assign(n, 0);
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const Eigen::Index i = index_of(r);
    const double dist = (tf.rotation * corrs.src.col(i) + tf.translation - corrs.dst.col(i)).norm();
    if (dist < tau) {
      out.mask[r] = 1;
      ++out.count;
      sum += dist;
    }
  }
  out.mean_residual = out.count > 0 ? sum / static_cast<double>(out.count) : 0.0;
  return out;
}

}  // namespace

InlierCount count_inliers(const RigidTransform& tf, const CorrespondenceSet& corrs, double tau) {
  return count_impl(tf, corrs, tau, static_cast<std::size_t>(corrs.size()),
                    [](std::size_t r) { return static_cast<Eigen::Index>(r); });
}

InlierCount count_inliers(const RigidTransform& tf, const CorrespondenceSet& corrs, double tau,
                          std::span<const Eigen::Index> members) {
  return count_impl(tf, corrs, tau, members.size(), [&](std::size_t r) { return members[r]; });
}

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.inlier_count != b.inlier_count) return a.inlier_count > b.inlier_count;
  if (a.mean_inlier_residual != b.mean_inlier_residual) {
    return a.mean_inlier_residual < b.mean_inlier_residual;
  }
  return a.subset_seed < b.subset_seed;
}

std::size_t select_best(const std::vector<Hypothesis>& hypotheses) {
  if (hypotheses.empty()) throw Error(ErrorCode::EmptyHypothesisSet, "no hypotheses to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < hypotheses.size(); ++i) {
    if (better_hypothesis(hypotheses[i], hypotheses[best])) best = i;
  }
  return best;
}

}  // namespace dfc
