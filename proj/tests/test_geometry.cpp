#include <doctest.h>

#include "dfc/geometry.hpp"
#include "oracles.hpp"

using namespace dfc;

TEST_CASE("apply: identity, half turn, inverse round trip") {
  CHECK((apply(RigidTransform::identity(), Vec3(1, 2, 3)) - Vec3(1, 2, 3)).norm() == 0.0);
  RigidTransform half{axis_angle(Vec3::UnitZ(), kPi), Vec3::Zero()};
  CHECK((apply(half, Vec3(1, 0, 0)) - Vec3(-1, 0, 0)).norm() < 1e-15);

  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto tf = oracle::random_tf(rng, 5.0);
    const Vec3 p = Vec3::Random() * 3.0;
    CHECK((apply(inverse(tf), apply(tf, p)) - p).norm() < 1e-12);
  }
}

TEST_CASE("compose / inverse group laws") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto a = oracle::random_tf(rng), b = oracle::random_tf(rng), c = oracle::random_tf(rng);
    const auto ia = compose(RigidTransform::identity(), a);
    CHECK((ia.matrix() - a.matrix()).norm() == 0.0);
    CHECK((compose(a, inverse(a)).matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-12);
    CHECK((compose(compose(a, b), c).matrix() - compose(a, compose(b, c)).matrix()).norm() < 1e-12);
    const Vec3 p = Vec3::Random();
    CHECK((apply(compose(a, b), p) - apply(a, apply(b, p))).norm() < 1e-12);
  }
}

TEST_CASE("matrix form is row-major homogeneous and round-trips") {
  std::mt19937_64 rng(3);
  const auto tf = oracle::random_tf(rng);
  const Eigen::Matrix4d m = tf.matrix();
  CHECK(m(3, 3) == 1.0);
  CHECK(m.row(3).head<3>().norm() == 0.0);
  CHECK((m.block<3, 1>(0, 3) - tf.translation).norm() == 0.0);
  const auto back = RigidTransform::from_matrix(m);
  CHECK((back.rotation - tf.rotation).norm() == 0.0);
}

TEST_CASE("rotation_error") {
  const Mat3 r = oracle::rodrigues(Vec3(1, 2, 3), 0.7);
  CHECK(rotation_error(r, r) == doctest::Approx(0.0));
  CHECK(rotation_error(axis_angle(Vec3::UnitZ(), kPi / 2), Mat3::Identity()) ==
        doctest::Approx(kPi / 2).epsilon(1e-14));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(1e-6, kPi - 1e-6);
  for (int t = 0; t < 100; ++t) {
    const double theta = th(rng);
    const Mat3 rot = oracle::rodrigues(oracle::random_axis(rng), theta);
    CHECK(std::abs(rotation_error(rot, Mat3::Identity()) - theta) < 1e-12);
  }
  // tiny angles keep full relative precision
  const double tiny = 3e-11;
  CHECK(std::abs(rotation_error(oracle::rodrigues(Vec3(0, 1, 1), tiny), Mat3::Identity()) - tiny) < 1e-20);
}

TEST_CASE("translation_error") {
  CHECK(translation_error(Vec3::Zero(), Vec3::Zero()) == 0.0);
  CHECK(translation_error(Vec3(1, 2, 2), Vec3::Zero()) == doctest::Approx(3.0));
  for (int t = 0; t < 20; ++t) {
    const Vec3 a = Vec3::Random(), b = Vec3::Random();
    CHECK(translation_error(a, b) == translation_error(b, a));
  }
  PoseError e{kPi / 4, 0.0};
  CHECK(e.re_deg() == doctest::Approx(45.0));
}

TEST_CASE("random_rotation: determinism, SO(3), uniformity") {
  Rng a(9), b(9);
  CHECK((random_rotation(a) - random_rotation(b)).norm() == 0.0);
  Rng rng(10);
  Vec3 mean = Vec3::Zero();
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = random_rotation(rng);
    CHECK(orthonormality_error(r) < 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
    CHECK(is_valid_rotation(r));
    mean += r * Vec3::UnitX();
  }
  CHECK((mean / 1000.0).norm() < 0.1);
}

TEST_CASE("random_unit_vector is unit length and deterministic") {
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 v = random_unit_vector(a);
    CHECK(std::abs(v.norm() - 1.0) < 1e-15);
    CHECK((v - random_unit_vector(b)).norm() == 0.0);
  }
}

TEST_CASE("is_valid_rotation rejects reflections and scaling") {
  Mat3 m = Mat3::Identity();
  m(2, 2) = -1.0;
  CHECK_FALSE(is_valid_rotation(m));
  CHECK_FALSE(is_valid_rotation(1.001 * Mat3::Identity()));
}
