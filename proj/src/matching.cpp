#include "dfc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfc/error.hpp"
#include "dfc/knn.hpp"
#include "dfc/parallel.hpp"
#include "dfc/procrustes.hpp"

namespace dfc {
namespace {

using Vector = Eigen::VectorXd;

// Unit-norm iterate of m * v; returns false when the product vanishes.
bool normalized_product(const Eigen::MatrixXd& m, const Vector& v, Vector& out) {
  out = m * v;
  const double n = out.norm();
  if (!(n > 1e-300)) return false;
  out /= n;
  return true;
}

Vector orient_and_clamp(const Vector& v) {
  Vector w = v.sum() < 0.0 ? Vector(-v) : v;
  w = w.cwiseMax(0.0);
  const double n = w.norm();
  if (!(n > 0.0)) return Vector::Constant(v.size(), 1.0 / std::sqrt(static_cast<double>(v.size())));
  return w / n;
}

}  // namespace

std::string to_string(PrincipalMode mode) {
  return mode == PrincipalMode::pca ? "pca" : "eigenvector";
}

PrincipalMode principal_mode_from_string(const std::string& name) {
  if (name == "pca") return PrincipalMode::pca;
  if (name == "eigenvector" || name == "eigenvalue") return PrincipalMode::eigenvector;
  throw Error(ErrorCode::InvalidArgument, "unknown principal mode '" + name + "'");
}

std::vector<InlierSubset> build_subsets(const CorrespondenceSet& corrs,
                                        const std::vector<Eigen::Index>& seeds, int k) {
  const Eigen::Index n = corrs.size();
  if (corrs.features.rows() != n || corrs.features.cols() == 0) {
    throw Error(ErrorCode::InvalidArgument, "correspondence features are missing");
  }
  if (k < 1 || n < k) {
    throw Error(ErrorCode::TooFewCorrespondences,
                "subset size " + std::to_string(k) + " exceeds " + std::to_string(n) + " correspondences");
  }
  for (const Eigen::Index seed : seeds) {
    if (seed < 0 || seed >= n) throw Error(ErrorCode::InvalidArgument, "seed index out of range");
  }
  std::vector<InlierSubset> out;
  out.reserve(seeds.size());
  if (seeds.empty()) return out;
  // Columns are contiguous, so keep one embedding per column.
  const Eigen::MatrixXd f = corrs.features.transpose();
  Eigen::MatrixXd queries(f.rows(), static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t i = 0; i < seeds.size(); ++i) queries.col(static_cast<Eigen::Index>(i)) = f.col(seeds[i]);
  const int take = k - 1;
  const auto nbs = take > 0 ? knn_batch(f, queries, take, seeds) : std::vector<Neighbor>{};
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    InlierSubset s;
    s.seed = seeds[i];
    s.members.reserve(static_cast<std::size_t>(k));
    s.members.push_back(seeds[i]);
    for (int t = 0; t < take; ++t) {
      s.members.push_back(nbs[i * static_cast<std::size_t>(take) + static_cast<std::size_t>(t)].index);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ConsistencyMatrix consistency_matrix(const Eigen::MatrixXd& features, double sigma2) {
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::NonPositiveSigma, "sigma^2 must be positive");
  const Eigen::Index k = features.rows();
  ConsistencyMatrix cm;
  cm.sigma2 = sigma2;
  Eigen::MatrixXd f = features;
  std::vector<bool> zero(static_cast<std::size_t>(k), false);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double n = f.row(i).norm();
    if (n > 0.0) {
      f.row(i) /= n;
    } else {
      zero[static_cast<std::size_t>(i)] = true;
      cm.has_zero_rows = true;
    }
  }
  const Eigen::MatrixXd gram = f * f.transpose();
  cm.m.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    cm.m(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      double e = 0.0;
      if (!zero[static_cast<std::size_t>(i)] && !zero[static_cast<std::size_t>(j)]) {
        const double d2 = std::max(0.0, gram(i, i) + gram(j, j) - 2.0 * gram(i, j));
        e = std::max(0.0, 1.0 - d2 / sigma2);
      }
      cm.m(i, j) = e;
      cm.m(j, i) = e;
    }
  }
  return cm;
}

PrincipalVector principal_vector(const Eigen::MatrixXd& m, PrincipalMode mode, int max_iters,
                                 double tol) {
  const Eigen::Index k = m.rows();
  if (k == 0 || m.cols() != k) throw Error(ErrorCode::ShapeMismatch, "matrix must be square");
  PrincipalVector pv;
  pv.mode = mode;

  Eigen::MatrixXd op = m;
  if (mode == PrincipalMode::pca) {
    const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
    op = centered.transpose() * centered;
  }

  Vector v = Vector::Constant(k, 1.0 / std::sqrt(static_cast<double>(k)));
  Vector next;
  if (!normalized_product(op, v, next)) {
    // The uniform vector lies in the null space; restart from a ramp.
    v = Vector::LinSpaced(k, 1.0, static_cast<double>(k)).normalized();
    if (!normalized_product(op, v, next)) {
      // Zero operator: every row is identical, weigh all members equally.
      pv.raw = Vector::Constant(k, 1.0 / std::sqrt(static_cast<double>(k)));
      pv.w = pv.raw;
      pv.converged = true;
      return pv;
    }
  }
  for (int it = 1; it <= max_iters; ++it) {
    pv.iterations = it;
    const bool done = (next - v).norm() < tol;
    v = next;
    if (done) {
      pv.converged = true;
      break;
    }
    if (!normalized_product(op, v, next)) break;
  }
  pv.raw = v;
  pv.eigenvalue = v.dot(op * v);
  pv.w = orient_and_clamp(v);
  return pv;
}

RigidTransform subset_transform(const CorrespondenceSet& corrs, const InlierSubset& subset,
                                const Eigen::VectorXd& weights) {
  const auto k = static_cast<Eigen::Index>(subset.members.size());
  if (weights.size() != k) throw Error(ErrorCode::LengthMismatch, "one weight per member required");
  Eigen::Matrix3Xd src(3, k), dst(3, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index j = subset.members[static_cast<std::size_t>(i)];
    src.col(i) = corrs.src.col(j);
    dst.col(i) = corrs.dst.col(j);
  }
  return procrustes::solve({src, dst, weights});
}

std::vector<SubsetResult> match_subsets(const CorrespondenceSet& corrs,
                                        const std::vector<InlierSubset>& subsets,
                                        const MatchingOptions& opts) {
  std::vector<SubsetResult> results(subsets.size());
  parallel_for(subsets.size(), opts.threads, [&](std::size_t s) {
    const auto& subset = subsets[s];
    const auto k = static_cast<Eigen::Index>(subset.members.size());
    Eigen::MatrixXd f(k, corrs.features.cols());
    for (Eigen::Index i = 0; i < k; ++i) f.row(i) = corrs.features.row(subset.members[static_cast<std::size_t>(i)]);
    const auto cm = consistency_matrix(f, opts.sigma2);
    auto& r = results[s];
    r.weights = principal_vector(cm.m, opts.mode, opts.max_iters, opts.tol);
    try {
      r.transform = subset_transform(corrs, subset, r.weights.w);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeometry && e.code() != ErrorCode::ZeroWeightSum) throw;
      r.diagnostic = e.what();
    }
  });
  return results;
}

}  // namespace dfc
