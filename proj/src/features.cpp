#include "dfc/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "dfc/error.hpp"
#include "dfc/knn.hpp"

namespace dfc {
namespace {

Eigen::VectorXd random_unit(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Eigen::VectorXd perturbed(const Eigen::VectorXd& base, double noise, Rng& rng) {
  if (noise <= 0.0) return base;
  std::normal_distribution<double> normal(0.0, noise / std::sqrt(static_cast<double>(base.size())));
  Eigen::VectorXd v = base;
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += normal(rng);
  const double n = v.norm();
  return n > 1e-12 ? Eigen::VectorXd(v / n) : base;
}

Eigen::MatrixXd local_histograms(const PointCloud& cloud, double radius, int bins) {
  const Eigen::Index n = cloud.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, 3 * bins);
  if (n == 0) return out;
  KdTree tree(cloud.points);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = cloud.points.col(i);
    for (const auto& nb : tree.radius(p, radius * radius)) {
      if (nb.index == i) continue;
      const Vec3 d = cloud.points.col(nb.index) - p;
      for (int a = 0; a < 3; ++a) {
        int b = static_cast<int>(std::floor((d(a) + radius) / (2.0 * radius) * bins));
        b = std::clamp(b, 0, bins - 1);
        out(i, a * bins + b) += 1.0;
      }
    }
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

}  // namespace

std::string to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::oracle: return "oracle";
    case FeatureMode::local_hist: return "local_hist";
    case FeatureMode::precomputed: return "precomputed";
  }
  return "unknown";
}

FeatureMode feature_mode_from_string(const std::string& name) {
  if (name == "oracle") return FeatureMode::oracle;
  if (name == "local_hist") return FeatureMode::local_hist;
  if (name == "precomputed") return FeatureMode::precomputed;
  throw Error(ErrorCode::InvalidArgument,
              "unknown feature mode '" + name + "' (valid: oracle, local_hist, precomputed)");
}

void FeatureProvider::validate() const {
  if (dim < 4) throw Error(ErrorCode::InvalidArgument, "feature dim must be >= 4");
  if (noise < 0.0) throw Error(ErrorCode::InvalidArgument, "oracle noise must be >= 0");
  if (mode == FeatureMode::local_hist) {
    if (!(radius > 0.0) || bins < 2) {
      throw Error(ErrorCode::InvalidArgument, "local_hist needs radius > 0 and bins >= 2");
    }
    if (dim != 3 * bins) throw Error(ErrorCode::InvalidArgument, "local_hist dim must equal 3 * bins");
  }
}

PairContext PairContext::from_transform(const PointCloud& source, const PointCloud& target,
                                        const RigidTransform& gt, double match_radius) {
  PairContext ctx;
  ctx.target_to_source.assign(static_cast<std::size_t>(target.size()), -1);
  if (source.size() == 0) return ctx;
  KdTree tree(apply(gt, source.points));
  const double r2 = match_radius * match_radius;
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    const auto nb = tree.nearest(target.points.col(j));
    if (nb.index >= 0 && nb.sq_dist <= r2) ctx.target_to_source[static_cast<std::size_t>(j)] = nb.index;
  }
  return ctx;
}

PairContext PairContext::identity(Eigen::Index n) {
  PairContext ctx;
  ctx.target_to_source.resize(static_cast<std::size_t>(n));
  std::iota(ctx.target_to_source.begin(), ctx.target_to_source.end(), Eigen::Index{0});
  return ctx;
}

Eigen::MatrixXd describe(const FeatureProvider& provider, const PointCloud& cloud,
                         const std::filesystem::path& csv) {
  provider.validate();
  switch (provider.mode) {
    case FeatureMode::local_hist:
      return local_histograms(cloud, provider.radius, provider.bins);
    case FeatureMode::precomputed:
      if (cloud.has_features()) {
        if (cloud.features.cols() != provider.dim) {
          throw Error(ErrorCode::DimensionMismatch, "attached features have the wrong dimension");
        }
        return cloud.features;
      }
      return load_feature_csv(csv, cloud.size(), provider.dim);
    case FeatureMode::oracle:
      throw Error(ErrorCode::MissingContext, "oracle features need ground-truth pair context");
  }
  return {};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> describe_pair(const FeatureProvider& provider,
                                                          const PointCloud& source,
                                                          const PointCloud& target,
                                                          const PairContext* context, Rng& rng) {
  provider.validate();
  if (provider.mode != FeatureMode::oracle) {
    return {describe(provider, source, provider.source_path),
            describe(provider, target, provider.target_path)};
  }
  if (context == nullptr ||
      static_cast<Eigen::Index>(context->target_to_source.size()) != target.size()) {
    throw Error(ErrorCode::MissingContext, "oracle features need ground-truth pair context");
  }
  const int dim = provider.dim;
  std::vector<Eigen::VectorXd> base(static_cast<std::size_t>(source.size()));
  for (auto& b : base) b = random_unit(dim, rng);

  Eigen::MatrixXd fs(source.size(), dim);
  for (Eigen::Index i = 0; i < source.size(); ++i) {
    fs.row(i) = perturbed(base[static_cast<std::size_t>(i)], provider.noise, rng).transpose();
  }
  Eigen::MatrixXd ft(target.size(), dim);
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    const Eigen::Index s = context->target_to_source[static_cast<std::size_t>(j)];
    if (s >= 0 && s < source.size()) {
      ft.row(j) = perturbed(base[static_cast<std::size_t>(s)], provider.noise, rng).transpose();
    } else {
      ft.row(j) = random_unit(dim, rng).transpose();
    }
  }
  return {std::move(fs), std::move(ft)};
}

Eigen::MatrixXd load_feature_csv(const std::filesystem::path& path, Eigen::Index expected_rows,
                                 Eigen::Index expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
      if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": bad number");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  path.string() + ":" + std::to_string(lineno) + ": ragged feature row");
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  if (expected_rows >= 0 && n != expected_rows) {
    throw Error(ErrorCode::DimensionMismatch, "feature file has " + std::to_string(n) +
                                                  " rows, expected " + std::to_string(expected_rows));
  }
  if (expected_dim > 0 && n > 0 && d != expected_dim) {
    throw Error(ErrorCode::DimensionMismatch, "feature file has " + std::to_string(d) +
                                                  " columns, expected " + std::to_string(expected_dim));
  }
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

void save_feature_csv(const Eigen::MatrixXd& features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) out << (j ? "," : "") << features(i, j);
    out << '\n';
  }
}

Eigen::Index nearest_row(const Eigen::MatrixXd& candidates,
                         const Eigen::Ref<const Eigen::RowVectorXd>& query) {
  Eigen::Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  const Eigen::Index dims = candidates.cols();
  for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < dims; ++d) {
      const double diff = candidates(j, d) - query(d);
      s += diff * diff;
    }
    if (s < best_d) {
      best_d = s;
      best = j;
    }
  }
  return best;
}

CorrespondenceSet build_correspondences(const PointCloud& source, const Eigen::MatrixXd& src_feats,
                                        const PointCloud& target, const Eigen::MatrixXd& dst_feats,
                                        Eigen::Index sample_n, Rng& rng) {
  if (source.size() == 0 || target.size() == 0) {
    throw Error(ErrorCode::EmptyCloud, "cannot match an empty cloud");
  }
  if (src_feats.rows() != source.size() || dst_feats.rows() != target.size()) {
    throw Error(ErrorCode::FeatureDimMismatch, "feature rows differ from point counts");
  }
  if (src_feats.cols() != dst_feats.cols()) {
    throw Error(ErrorCode::FeatureDimMismatch, "source and target feature dimensions differ");
  }
  const Eigen::Index n = std::min(std::max<Eigen::Index>(sample_n, 1), source.size());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(source.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (n < source.size()) {
    // partial Fisher-Yates
    for (Eigen::Index i = 0; i < n; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, source.size() - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n));
    std::sort(idx.begin(), idx.end());
  }

  CorrespondenceSet out;
  out.src.resize(3, n);
  out.dst.resize(3, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = idx[static_cast<std::size_t>(r)];
    const Eigen::Index j = nearest_row(dst_feats, src_feats.row(i));
    out.src.col(r) = source.points.col(i);
    out.dst.col(r) = target.points.col(j);
  }
  return out;
}

Eigen::MatrixXd oracle_correspondence_features(const std::vector<std::uint8_t>& labels, int dim,
                                               double noise, Rng& rng) {
  const Eigen::VectorXd shared = random_unit(dim, rng);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(labels.size()), dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f.row(r) = (labels[i] ? perturbed(shared, noise, rng) : random_unit(dim, rng)).transpose();
  }
  return f;
}

}  // namespace dfc
