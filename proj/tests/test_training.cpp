#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dfc/error.hpp"
#include "dfc/training.hpp"
#include "oracles.hpp"

using namespace dfc;

namespace {

TrainConfig tiny() {
  TrainConfig c;
  c.gfm.scale_channels = {4, 4, 8};
  c.gfm.out_dim = 8;
  c.mlp_hidden = {8, 4};
  c.train_pairs = 8;
  c.val_pairs = 3;
  c.batch_size = 4;
  c.epochs = 2;
  c.data.n_points = 48;
  return c;
}

}  // namespace

TEST_CASE("classification loss: analytic values") {
  const auto l = classification_loss(Eigen::VectorXd::Constant(10, 0.5), std::vector<std::uint8_t>(10, 1));
  CHECK(std::abs(l.loss - std::log(2.0)) < 1e-12);

  Eigen::VectorXd c(4);
  c << 0.0, 1.0, 0.0, 1.0;
  const auto perfect = classification_loss(c, {0, 1, 0, 1});
  CHECK(perfect.loss <= 2e-7);

  try {
    classification_loss(c, {0, 1});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("classification loss: naive oracle and finite differences") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  Eigen::VectorXd c(30);
  std::vector<std::uint8_t> lab(30);
  for (int i = 0; i < 30; ++i) c(i) = u(rng), lab[static_cast<std::size_t>(i)] = i % 3 == 0;
  const auto lg = classification_loss(c, lab);
  double naive = 0.0;
  for (int i = 0; i < 30; ++i) naive += oracle::bce(c(i), lab[static_cast<std::size_t>(i)]);
  CHECK(std::abs(lg.loss - naive / 30) < 1e-12);
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd hi = c, lo = c;
    hi(i) += 1e-6;
    lo(i) -= 1e-6;
    const double fd = (classification_loss(hi, lab).loss - classification_loss(lo, lab).loss) / 2e-6;
    CHECK(std::abs(fd - lg.grad(i)) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("bce on logits: finite differences") {
  Eigen::VectorXd z = Eigen::VectorXd::Random(12) * 4.0;
  std::vector<std::uint8_t> lab{1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1};
  const auto lg = bce_with_logits(z, lab);
  double naive = 0.0;
  for (int i = 0; i < 12; ++i) naive += oracle::bce(1.0 / (1.0 + std::exp(-z(i))), lab[static_cast<std::size_t>(i)]);
  CHECK(std::abs(lg.loss - naive / 12) < 1e-12);
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd hi = z, lo = z;
    hi(i) += 1e-6;
    lo(i) -= 1e-6;
    const double fd = (bce_with_logits(hi, lab).loss - bce_with_logits(lo, lab).loss) / 2e-6;
    CHECK(std::abs(fd - lg.grad(i)) <= 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("transformation loss") {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_tf(rng), b = oracle::random_tf(rng);
  CHECK(transformation_loss(a, a) < 1e-28);
  RigidTransform z;
  z.rotation = oracle::rodrigues(Eigen::Vector3d::UnitZ(), kPi / 2);
  CHECK(std::abs(transformation_loss(RigidTransform::identity(), z) - 4.0) < 1e-12);
  for (double th : {0.1, 1.0, 2.5}) {
    z.rotation = oracle::rodrigues(Eigen::Vector3d::UnitZ(), th);
    CHECK(std::abs(transformation_loss(RigidTransform::identity(), z) - 4 * (1 - std::cos(th))) < 1e-12);
  }
  const Eigen::Matrix3d m = a.rotation.transpose() * b.rotation;
  double naive = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) naive += std::pow(m(i, j) - (i == j ? 1.0 : 0.0), 2);
  for (int i = 0; i < 3; ++i) naive += std::pow(a.translation(i) - b.translation(i), 2);
  CHECK(std::abs(transformation_loss(a, b) - naive) < 1e-12);
}

TEST_CASE("generate_labels") {
  std::mt19937_64 rng(3);
  const auto gt = oracle::random_tf(rng);
  CorrespondenceSet c;
  c.src = oracle::random_points(20, rng);
  c.dst = oracle::transform(gt, c.src);
  const auto all = generate_labels(c, gt, 0.05);
  CHECK(std::all_of(all.begin(), all.end(), [](auto l) { return l == 1; }));

  CorrespondenceSet one;
  one.src = Eigen::Matrix3Xd::Zero(3, 1);
  one.dst = Eigen::Matrix3Xd::Zero(3, 1);
  one.dst(1, 0) = 0.125;
  CHECK(generate_labels(one, RigidTransform::identity(), 0.125)[0] == 0);

  const double r = 0.6;
  double sum = 0.0;
  std::vector<double> m;
  for (int s = 0; s < 100; ++s) {
    Rng g(static_cast<std::uint64_t>(s));
    const auto [pair, corrs] = make_synthetic_pair(SyntheticOptions{300, r, 0.002, 0.05}, g);
    const auto l = generate_labels(corrs, pair.gt, 0.05);
    m.push_back(static_cast<double>(std::count(l.begin(), l.end(), 1)) / 300.0);
    sum += m.back();
  }
  const double mu = sum / 100.0;
  double var = 0.0;
  for (double v : m) var += (v - mu) * (v - mu);
  const double se = std::sqrt(var / 99.0 / 100.0);
  CHECK(mu >= (1 - r) - 3 * se);
  CHECK(mu <= (1 - r) + 3 * se + 0.01);  // chance re-pairings within tau
}

TEST_CASE("train: zero learning rate freezes everything") {
  auto cfg = tiny();
  cfg.learning_rate = 0.0;
  const auto res = train(cfg);
  Rng init_rng(cfg.seed);
  const DfcModel init(cfg.gfm, cfg.mlp_hidden, init_rng);
  CHECK(same_state(res.model, init));
  REQUIRE(res.trace.size() == 3);
  CHECK(res.trace[1].val.l_c == res.trace[0].val.l_c);
  CHECK(res.trace[2].val.total == res.trace[0].val.total);
}

TEST_CASE("train: zero epochs returns the initialization; same seed, same trace") {
  auto cfg = tiny();
  cfg.epochs = 0;
  const auto zero = train(cfg);
  Rng init_rng(cfg.seed);
  CHECK(same_state(zero.model, DfcModel(cfg.gfm, cfg.mlp_hidden, init_rng)));
  CHECK(zero.trace.size() == 1);

  cfg = tiny();
  cfg.threads = 1;
  const auto a = train(cfg);
  cfg.threads = 3;
  int calls = 0;
  const auto b = train(cfg, [&](const EpochRecord&) { ++calls; });
  CHECK(calls == 3);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].val.l_c == b.trace[i].val.l_c);
    CHECK(a.trace[i].val.l_t == b.trace[i].val.l_t);
    CHECK(a.trace[i].train_l_c == b.trace[i].train_l_c);
  }
  CHECK(same_state(a.model, b.model));
}

TEST_CASE("train: divergence and config validation") {
  auto cfg = tiny();
  cfg.learning_rate = 1e300;
  try {
    train(cfg);
    FAIL("expected DivergenceDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
  }
  cfg = tiny();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny();
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("trace CSV layout") {
  auto cfg = tiny();
  cfg.epochs = 1;
  const auto res = train(cfg);
  const auto path = std::filesystem::temp_directory_path() / "dfc_trace_test.csv";
  write_trace_csv(res.trace, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "epoch,l_c,l_t,total,train_l_c");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  CHECK(rows == 2);
}
