#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "dfc/error.hpp"
#include "dfc/features.hpp"
#include "oracles.hpp"

using namespace dfc;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(DFC_SOURCE_DIR) / "tests" / "fixtures";

// Target i is gt applied to source perm[i]; returns both clouds.
std::pair<PointCloud, PointCloud> permuted_pair(Eigen::Index n, const RigidTransform& gt,
                                                std::vector<Eigen::Index>& perm, std::mt19937_64& rng) {
  PointCloud src, dst;
  src.points = oracle::random_points(n, rng, 0.0, 1.0);
  perm.resize(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  dst.points.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i)
    dst.points.col(i) = gt.rotation * src.points.col(perm[static_cast<std::size_t>(i)]) + gt.translation;
  return {src, dst};
}

}  // namespace

TEST_CASE("oracle descriptors: matched pairs coincide, others are near-orthogonal") {
  std::mt19937_64 g(1);
  const auto gt = oracle::random_tf(g);
  std::vector<Eigen::Index> perm;
  auto [src, dst] = permuted_pair(1000, gt, perm, g);
  FeatureProvider p;
  p.mode = FeatureMode::oracle;
  p.dim = 32;
  p.noise = 0.0;
  const auto ctx = PairContext::from_transform(src, dst, gt, 1e-6);
  for (Eigen::Index i = 0; i < 1000; ++i) CHECK(ctx.target_to_source[static_cast<std::size_t>(i)] == perm[static_cast<std::size_t>(i)]);
  Rng rng(2);
  const auto [fs_, fd] = describe_pair(p, src, dst, &ctx, rng);
  double mism = 0.0;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    const auto s = perm[static_cast<std::size_t>(i)];
    CHECK((fd.row(i) - fs_.row(s)).norm() < 1e-15);
    CHECK(std::abs(fs_.row(s).norm() - 1.0) < 1e-12);
    mism += (fd.row(i) - fs_.row((s + 1) % 1000)).squaredNorm();
  }
  mism /= 1000.0;
  CHECK(mism >= 1.8);
  CHECK(mism <= 2.2);

  CHECK_THROWS_AS(describe_pair(p, src, dst, nullptr, rng), Error);
  try {
    describe_pair(p, src, dst, nullptr, rng);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingContext);
  }
}

TEST_CASE("oracle noise has the requested expected norm") {
  PointCloud c;
  std::mt19937_64 g(3);
  c.points = oracle::random_points(2000, g);
  FeatureProvider p;
  p.dim = 64;
  p.noise = 0.3;
  const auto ctx = PairContext::identity(2000);
  Rng rng(4);
  const auto [a, b] = describe_pair(p, c, c, &ctx, rng);
  // two independently perturbed copies of the same unit vector: E||a-b||^2 ~ 2 * 0.09 before
  // re-normalization shrinks it slightly
  const double d2 = (a - b).rowwise().squaredNorm().mean();
  CHECK(d2 > 0.12);
  CHECK(d2 < 0.19);
  CHECK((a.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("local_hist: isolated point is the zero vector; rows have unit or zero norm") {
  FeatureProvider p;
  p.mode = FeatureMode::local_hist;
  p.radius = 0.1;
  p.bins = 4;
  p.dim = 12;
  PointCloud lone;
  lone.points = Eigen::Matrix3Xd::Zero(3, 1);
  const auto f = describe(p, lone);
  CHECK(f.rows() == 1);
  CHECK(f.cols() == 12);
  CHECK(f.norm() == 0.0);

  std::mt19937_64 g(5);
  PointCloud c;
  c.points = oracle::random_points(500, g, 0.0, 0.5);
  const auto h = describe(p, c);
  CHECK(h.allFinite());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double n = h.row(i).norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-9));
  }
}

TEST_CASE("precomputed CSV fixture") {
  const auto m = load_feature_csv(kFixtures / "feats_3x4.csv");
  Eigen::MatrixXd want(3, 4);
  want << 0.5, -1, 2, 0, 1e-3, 3.25, 0, -7, 4, 4, 4, 4.5;
  CHECK(m == want);
  CHECK_THROWS_AS(load_feature_csv(kFixtures / "feats_3x4.csv", 4), Error);
  try {
    load_feature_csv(kFixtures / "ragged.csv");
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  FeatureProvider p;
  p.mode = FeatureMode::precomputed;
  p.dim = 4;
  PointCloud c;
  c.points = Eigen::Matrix3Xd::Zero(3, 3);
  CHECK(describe(p, c, kFixtures / "feats_3x4.csv") == want);
  PointCloud wrong;
  wrong.points = Eigen::Matrix3Xd::Zero(3, 5);
  CHECK_THROWS_AS(describe(p, wrong, kFixtures / "feats_3x4.csv"), Error);
}

TEST_CASE("build_correspondences: noise-free oracle gives ground-truth partners") {
  std::mt19937_64 g(6);
  const auto gt = oracle::random_tf(g);
  std::vector<Eigen::Index> perm;
  auto [src, dst] = permuted_pair(300, gt, perm, g);
  FeatureProvider p;
  p.noise = 0.0;
  const auto ctx = PairContext::from_transform(src, dst, gt, 1e-6);
  Rng rng(7);
  const auto [fs_, fd] = describe_pair(p, src, dst, &ctx, rng);
  const auto corrs = build_correspondences(src, fs_, dst, fd, 300, rng);
  REQUIRE(corrs.size() == 300);
  for (Eigen::Index i = 0; i < 300; ++i) {
    CHECK((gt.rotation * corrs.src.col(i) + gt.translation - corrs.dst.col(i)).norm() < 1e-12);
  }
}

TEST_CASE("build_correspondences: tie goes to the lower target index") {
  PointCloud src, dst;
  src.points = Eigen::Matrix3Xd::Zero(3, 1);
  dst.points = Eigen::Matrix3Xd::Random(3, 4);
  Eigen::MatrixXd fs_(1, 4), fd(4, 4);
  fs_ << 1, 0, 0, 0;
  fd << 0, 1, 0, 0,  //
      0.9, 0.1, 0, 0,  //
      0.9, 0.1, 0, 0,  //
      0, 0, 1, 0;
  Rng rng(0);
  const auto c = build_correspondences(src, fs_, dst, fd, 1, rng);
  CHECK((c.dst.col(0) - dst.points.col(1)).norm() == 0.0);
  CHECK(nearest_row(fd, fs_.row(0)) == 1);
}

TEST_CASE("build_correspondences equals a brute-force matcher") {
  std::mt19937_64 g(8);
  const auto gt = oracle::random_tf(g);
  std::vector<Eigen::Index> perm;
  auto [src, dst] = permuted_pair(2000, gt, perm, g);
  FeatureProvider p;
  p.noise = 0.3;
  const auto ctx = PairContext::from_transform(src, dst, gt, 1e-6);
  Rng rng(9);
  const auto [fs_, fd] = describe_pair(p, src, dst, &ctx, rng);
  Rng sample_rng(10);
  const auto corrs = build_correspondences(src, fs_, dst, fd, 500, sample_rng);
  REQUIRE(corrs.size() == 500);

  // the sampled source indices, recovered by position
  int matched = 0;
  for (Eigen::Index i = 0; i < 500; ++i) {
    Eigen::Index si = -1;
    for (Eigen::Index s = 0; s < 2000; ++s)
      if ((src.points.col(s) - corrs.src.col(i)).norm() == 0.0) si = s;
    REQUIRE(si >= 0);
    Eigen::Index best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < 2000; ++j) {
      double d = 0.0;
      for (Eigen::Index k = 0; k < fd.cols(); ++k) d += (fs_(si, k) - fd(j, k)) * (fs_(si, k) - fd(j, k));
      if (d < bd) bd = d, best = j;
    }
    CHECK((corrs.dst.col(i) - dst.points.col(best)).norm() == 0.0);
    matched += ctx.target_to_source[static_cast<std::size_t>(best)] == si;
  }
  // at this noise the true partner wins almost always
  CHECK(matched > 450);

  Rng again(10);
  const auto corrs2 = build_correspondences(src, fs_, dst, fd, 500, again);
  CHECK(corrs2.src == corrs.src);
  CHECK(corrs2.dst == corrs.dst);
}

TEST_CASE("build_correspondences errors") {
  PointCloud empty, one;
  one.points = Eigen::Matrix3Xd::Zero(3, 1);
  Eigen::MatrixXd f1 = Eigen::MatrixXd::Ones(1, 4), f0(0, 4), f3 = Eigen::MatrixXd::Ones(1, 3);
  Rng rng(0);
  try {
    build_correspondences(empty, f0, one, f1, 1, rng);
    FAIL("expected EmptyCloud");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCloud);
  }
  try {
    build_correspondences(one, f1, one, f3, 1, rng);
    FAIL("expected FeatureDimMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FeatureDimMismatch);
  }
}

TEST_CASE("oracle correspondence features separate inliers from outliers") {
  std::vector<std::uint8_t> labels(100, 0);
  for (int i = 0; i < 40; ++i) labels[static_cast<std::size_t>(i)] = 1;
  Rng rng(11);
  const auto f = oracle_correspondence_features(labels, 32, 0.1, rng);
  CHECK((f.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  double in = 0.0, out = 0.0;
  for (int i = 1; i < 40; ++i) in += (f.row(i) - f.row(0)).squaredNorm();
  for (int i = 41; i < 100; ++i) out += (f.row(i) - f.row(40)).squaredNorm();
  CHECK(in / 39 < 0.1);
  CHECK(out / 59 > 1.5);
}

TEST_CASE("feature mode names round-trip") {
  for (auto m : {FeatureMode::oracle, FeatureMode::local_hist, FeatureMode::precomputed})
    CHECK(feature_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(feature_mode_from_string("fcgf"), Error);
}
