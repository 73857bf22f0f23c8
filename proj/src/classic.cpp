#include "dfc/classic.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "dfc/error.hpp"
#include "dfc/knn.hpp"
#include "dfc/procrustes.hpp"

namespace dfc {
namespace {

struct Matches {
  Eigen::Matrix3Xd src;
  Eigen::Matrix3Xd dst;
  double rmse = 0.0;
};

Matches match(const Eigen::Matrix3Xd& moved, const KdTree& tree, double max_dist) {
  const double r2 = max_dist * max_dist;
  std::vector<Eigen::Index> si, ti;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < moved.cols(); ++i) {
    const auto nb = tree.nearest(moved.col(i));
    if (nb.index >= 0 && nb.sq_dist < r2) {
      si.push_back(i);
      ti.push_back(nb.index);
      sum += nb.sq_dist;
    }
  }
  Matches m;
  const auto n = static_cast<Eigen::Index>(si.size());
  m.src.resize(3, n);
  m.dst.resize(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    m.src.col(k) = moved.col(si[static_cast<std::size_t>(k)]);
    m.dst.col(k) = tree.points().col(ti[static_cast<std::size_t>(k)]);
  }
  m.rmse = n > 0 ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
  return m;
}

}  // namespace

void IcpConfig::validate() const {
  if (max_iterations < 1 || !(max_corr_dist > 0.0) || !(transform_tol > 0.0) || !(rmse_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "ICP settings must be positive");
  }
}

IcpResult icp_refine(const PointCloud& source, const PointCloud& target,
                     const RigidTransform& initial, const IcpConfig& cfg) {
  cfg.validate();
  if (source.size() == 0 || target.size() == 0) {
    throw Error(ErrorCode::EmptyCloud, "ICP needs non-empty clouds");
  }
  const KdTree tree(target.points);
  IcpResult out;
  out.transform = initial;

  Matches cur = match(apply(initial, source.points), tree, cfg.max_corr_dist);
  if (cur.src.cols() == 0) {
    out.no_correspondences = true;
    return out;
  }
  out.rmse_history.push_back(cur.rmse);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    out.iterations = it;
    if (cur.src.cols() < 3) break;
    RigidTransform delta;
    try {
      delta = procrustes::solve(cur.src, cur.dst);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeometry) throw;
      break;
    }
    const RigidTransform candidate = compose(delta, out.transform);
    Matches next = match(apply(candidate, source.points), tree, cfg.max_corr_dist);
    if (next.src.cols() == 0 || next.rmse > cur.rmse) break;

    const double step = rotation_error(delta.rotation, Mat3::Identity()) + delta.translation.norm();
    const double drop = cur.rmse - next.rmse;
    out.transform = candidate;
    out.rmse_history.push_back(next.rmse);
    cur = std::move(next);
    if (step < cfg.transform_tol || drop < cfg.rmse_tol) break;
  }
  out.final_rmse = out.rmse_history.back();
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 g(base ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  g();
  return g();
}

RansacResult ransac(const CorrespondenceSet& corrs, const RansacConfig& cfg) {
  const Eigen::Index n = corrs.size();
  if (n < 3) throw Error(ErrorCode::TooFewCorrespondences, "RANSAC needs at least 3 correspondences");
  if (cfg.iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");

  RansacResult out;
  bool have = false;
  Eigen::Matrix3Xd src(3, 3), dst(3, 3);
  for (int it = 0; it < cfg.iterations; ++it) {
    SplitMix64 g(derive_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    Eigen::Index a = pick(g), b = pick(g), c = pick(g);
    while (b == a) b = pick(g);
    while (c == a || c == b) c = pick(g);
    const Eigen::Index idx[3] = {a, b, c};
    for (int j = 0; j < 3; ++j) {
      src.col(j) = corrs.src.col(idx[j]);
      dst.col(j) = corrs.dst.col(idx[j]);
    }
    RigidTransform tf;
    try {
      tf = procrustes::solve(src, dst);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeometry) throw;
      ++out.degenerate_samples;
      continue;
    }
    const auto count = count_inliers(tf, corrs, cfg.tau);
    Hypothesis h{tf, count.count, count.mean_residual, it};
    out.max_sampled_inliers = std::max(out.max_sampled_inliers, h.inlier_count);
    if (!have || better_hypothesis(h, out.best)) {
      out.best = h;
      have = true;
    }
  }
  if (!have) throw Error(ErrorCode::AllSamplesDegenerate, "every minimal sample was degenerate");

  const auto consensus = count_inliers(out.best.transform, corrs, cfg.tau);
  if (consensus.count >= 3) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (consensus.mask[static_cast<std::size_t>(i)]) members.push_back(i);
    }
    const auto inliers = corrs.select(members);
    try {
      const RigidTransform refit = procrustes::solve(inliers.src, inliers.dst);
      // Always kept: the sample that won by one or two chance inliers is a
      // much noisier pose than the least-squares fit of its consensus set.
      const auto c = count_inliers(refit, corrs, cfg.tau);
      out.best.transform = refit;
      out.best.inlier_count = c.count;
      out.best.mean_inlier_residual = c.mean_residual;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeometry) throw;
    }
  }
  return out;
}

}  // namespace dfc
