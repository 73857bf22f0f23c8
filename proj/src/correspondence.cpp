#include "dfc/correspondence.hpp"

#include "dfc/error.hpp"

namespace dfc {

Vec6 CorrespondenceSet::as_6d(Eigen::Index i) const {
  Vec6 m;
  m << src.col(i), dst.col(i);
  return m;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> CorrespondenceSet::stacked_6d() const {
  Eigen::Matrix<double, 6, Eigen::Dynamic> m(6, size());
  m.topRows<3>() = src;
  m.bottomRows<3>() = dst;
  return m;
}

void CorrespondenceSet::validate() const {
  const auto n = size();
  if (dst.cols() != n) throw Error(ErrorCode::ShapeMismatch, "src/dst column counts differ");
  if (features.size() > 0 && features.rows() != n) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows differ from correspondence count");
  }
  if (confidences.size() > 0) {
    if (confidences.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "confidence count differs from correspondence count");
    }
    if ((confidences.array() < 0.0).any() || (confidences.array() > 1.0).any()) {
      throw Error(ErrorCode::InvalidArgument, "confidences outside [0, 1]");
    }
  }
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "label count differs from correspondence count");
  }
}

CorrespondenceSet CorrespondenceSet::select(std::span<const Eigen::Index> indices) const {
  const auto m = static_cast<Eigen::Index>(indices.size());
  CorrespondenceSet out;
  out.src.resize(3, m);
  out.dst.resize(3, m);
  if (features.size() > 0) out.features.resize(m, features.cols());
  if (confidences.size() > 0) out.confidences.resize(m);
  if (!labels.empty()) out.labels.resize(indices.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    const Eigen::Index i = indices[static_cast<std::size_t>(r)];
    out.src.col(r) = src.col(i);
    out.dst.col(r) = dst.col(i);
    if (features.size() > 0) out.features.row(r) = features.row(i);
    if (confidences.size() > 0) out.confidences(r) = confidences(i);
    if (!labels.empty()) out.labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(i)];
  }
  return out;
}

double CorrespondenceSet::inlier_fraction() const {
  if (labels.empty()) return 0.0;
  double s = 0.0;
  for (auto l : labels) s += l;
  return s / static_cast<double>(labels.size());
}

}  // namespace dfc
