#include "dfc/selfcheck.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <sstream>

#include "dfc/classic.hpp"
#include "dfc/error.hpp"
#include "dfc/knn.hpp"
#include "dfc/matching.hpp"
#include "dfc/procrustes.hpp"
#include "dfc/training.hpp"
#include "dfc/verification.hpp"

namespace dfc {
namespace {

double model_loss(const DfcModel& model, const CorrespondenceSet& corrs) {
  const Eigen::MatrixXd f = model.gfm.forward(corrs, Mode::train);
  return bce_with_logits(model.mlp.logits(f), corrs.labels).loss;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

CheckResult check(const std::string& name, const std::function<std::string(bool&)>& body) {
  CheckResult r{name, false, {}};
  try {
    r.detail = body(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("threw: ") + e.what();
  }
  return r;
}

Eigen::Matrix3Xd random_points(Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3Xd p(3, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

RigidTransform random_transform(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {random_rotation(rng), Vec3(u(rng), u(rng), u(rng))};
}

}  // namespace

std::vector<GroupCheck> check_model_gradients(DfcModel& model, const CorrespondenceSet& corrs,
                                              double step) {
  ForwardTrace trace;
  MlpTrace mt;
  const Eigen::MatrixXd f = model.gfm.forward(corrs, Mode::train, &trace);
  const auto lg = bce_with_logits(model.mlp.logits(f, &mt), corrs.labels);
  MlpGrads mg = model.mlp.backward(mt, lg.grad);
  auto gg = model.gfm.backward(trace, corrs, mg.input);

  auto analytic = GfmNet::gradient_blocks(gg, model.gfm.layers());
  for (auto& b : WeightMlp::gradient_blocks(mg)) analytic.push_back(b);
  auto params = model.gfm.parameters();
  for (auto& b : model.mlp.parameters()) params.push_back(b);

  const double base = model_loss(model, corrs);
  std::vector<GroupCheck> out;
  for (std::size_t g = 0; g < params.size(); ++g) {
    double diff = 0.0, n_fd = 0.0, n_an = 0.0;
    std::size_t refined = 0;
    for (std::size_t i = 0; i < params[g].values.size(); ++i) {
      double& p = params[g].values[i];
      const double keep = p;
      auto central = [&](double h, double& fwd, double& bwd) {
        p = keep + h;
        const double up = model_loss(model, corrs);
        p = keep - h;
        const double down = model_loss(model, corrs);
        p = keep;
        fwd = (up - base) / h;
        bwd = (base - down) / h;
        return (up - down) / (2.0 * h);
      };
      double fwd = 0.0, bwd = 0.0;
      double fd = central(step, fwd, bwd);
      // smooth: one-sided slopes differ by ~step * curvature
      if (std::abs(fwd - bwd) > 1e-3 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-8) {
        fd = central(step / 100.0, fwd, bwd);
        ++refined;
      }
      const double an = analytic[g].values[i];
      diff += (fd - an) * (fd - an);
      n_fd += fd * fd;
      n_an += an * an;
    }
    const double denom = std::max({std::sqrt(n_fd), std::sqrt(n_an), 1e-300});
    out.push_back({params[g].name, std::sqrt(diff) / denom, params[g].values.size(), refined});
  }
  return out;
}

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed);

  out.push_back(check("procrustes_exact_recovery", [&](bool& ok) {
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const auto gt = random_transform(rng);
      const Eigen::Matrix3Xd src = random_points(3 + t % 20, rng);
      Eigen::VectorXd w = (Eigen::VectorXd::Random(src.cols()).array() + 1.5).matrix();
      const auto est = procrustes::solve({src, apply(gt, src), w});
      const auto e = pose_error(est, gt);
      worst = std::max({worst, e.re, e.te});
    }
    ok = worst < 1e-9;
    return "worst RE/TE " + num(worst);
  }));

  out.push_back(check("procrustes_reflection_guard", [&](bool& ok) {
    Eigen::Matrix3Xd src = random_points(10, rng);
    Eigen::Matrix3Xd dst = src;
    dst.row(2) *= -1.0;  // mirror image; the best proper rotation still has det +1
    const auto est = procrustes::solve(src, dst);
    ok = is_valid_rotation(est.rotation);
    return "det " + num(est.rotation.determinant());
  }));

  out.push_back(check("knn_matches_brute_force", [&](bool& ok) {
    Eigen::MatrixXd pts = Eigen::MatrixXd::Random(6, 300);
    pts.col(7) = pts.col(3);  // a duplicate exercises the index tie rule
    const KdTree tree(pts);
    std::vector<Eigen::Index> self(300);
    for (Eigen::Index i = 0; i < 300; ++i) self[static_cast<std::size_t>(i)] = i;
    const auto batch = knn_batch(pts, pts, 9, self);
    ok = true;
    for (Eigen::Index i = 0; i < 300 && ok; ++i) {
      const auto want = brute_force_knn(pts, pts.col(i), 9, i);
      const auto got = tree.knn(pts.col(i), 9, i);
      ok = want == got;
      for (int s = 0; s < 9 && ok; ++s) ok = batch[static_cast<std::size_t>(i * 9 + s)] == want[static_cast<std::size_t>(s)];
    }
    return std::string(ok ? "300 queries identical" : "mismatch");
  }));

  out.push_back(check("power_iteration_vs_eigensolver", [&](bool& ok) {
    double worst = 1.0;
    for (int t = 0; t < 50; ++t) {
      const int k = 4 + t % 9;
      Eigen::MatrixXd f = Eigen::MatrixXd::Random(k, 8);
      const auto cm = consistency_matrix(f, 2.0);
      const auto pv = principal_vector(cm.m, PrincipalMode::eigenvector);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cm.m);
      const Eigen::VectorXd top = es.eigenvectors().col(k - 1);
      worst = std::min(worst, std::abs(top.dot(pv.raw)));
    }
    ok = worst > 1.0 - 1e-8;
    return "min |cos| " + num(worst);
  }));

  out.push_back(check("count_inliers_naive", [&](bool& ok) {
    ok = true;
    for (int t = 0; t < 200 && ok; ++t) {
      CorrespondenceSet c;
      c.src = random_points(50, rng);
      c.dst = random_points(50, rng);
      const auto tf = random_transform(rng);
      const double tau = 0.5 + 0.01 * t;
      Eigen::Index naive = 0;
      for (Eigen::Index i = 0; i < 50; ++i) {
        const Vec3 r = tf.rotation * c.src.col(i) + tf.translation - c.dst.col(i);
        if (r.norm() < tau) ++naive;
      }
      ok = count_inliers(tf, c, tau).count == naive;
    }
    return std::string(ok ? "200 instances equal" : "mismatch");
  }));

  out.push_back(check("bce_analytic", [&](bool& ok) {
    const auto l = classification_loss(Eigen::VectorXd::Constant(5, 0.5), std::vector<std::uint8_t>(5, 1));
    ok = std::abs(l.loss - std::log(2.0)) < 1e-12;
    return "loss " + num(l.loss);
  }));

  out.push_back(check("transformation_loss_analytic", [&](bool& ok) {
    const RigidTransform a = RigidTransform::identity();
    const RigidTransform b{axis_angle(Vec3::UnitZ(), kPi / 2.0), Vec3::Zero()};
    const double l = transformation_loss(a, b);
    ok = std::abs(l - 4.0) < 1e-12;
    return "loss " + num(l);
  }));

  out.push_back(check("bce_gradient_fd", [&](bool& ok) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Eigen::VectorXd c(16);
    std::vector<std::uint8_t> l(16);
    for (int i = 0; i < 16; ++i) {
      c(i) = u(rng);
      l[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i % 3 == 0);
    }
    const auto an = classification_loss(c, l).grad;
    double worst = 0.0;
    for (int i = 0; i < 16; ++i) {
      Eigen::VectorXd up = c, dn = c;
      up(i) += 1e-6;
      dn(i) -= 1e-6;
      const double fd = (classification_loss(up, l).loss - classification_loss(dn, l).loss) / 2e-6;
      worst = std::max(worst, std::abs(fd - an(i)) / std::max(std::abs(an(i)), 1e-12));
    }
    ok = worst < 1e-6;
    return "max rel error " + num(worst);
  }));

  out.push_back(check("model_gradients_fd", [&](bool& ok) {
    GfmConfig gc;
    gc.scale_channels = {8, 8, 16};
    gc.out_dim = 16;
    Rng mr(seed + 1);
    DfcModel model(gc, {16, 8}, mr);
    SyntheticOptions so{20, 0.5, 0.01, 0.05};
    auto [pair, corrs] = make_synthetic_pair(so, mr);
    corrs.labels = generate_labels(corrs, pair.gt, so.tau);
    double worst = 0.0;
    std::string name;
    for (const auto& g : check_model_gradients(model, corrs)) {
      if (g.rel_error > worst) {
        worst = g.rel_error;
        name = g.name;
      }
    }
    ok = worst < 1e-4;
    return "worst group " + name + " rel error " + num(worst);
  }));

  out.push_back(check("fused_eval_matches_traced_eval", [&](bool& ok) {
    GfmConfig gc;
    gc.scale_channels = {8, 8, 16};
    gc.out_dim = 16;
    Rng mr(seed + 2);
    DfcModel model(gc, {16, 8}, mr);
    for (auto& l : model.gfm.layers()) {
      l.running_mean = Eigen::VectorXd::Random(l.running_mean.size()) * 0.1;
      l.running_var = Eigen::VectorXd::Constant(l.running_var.size(), 1.5);
    }
    SyntheticOptions so{60, 0.5, 0.01, 0.05};
    const auto corrs = make_synthetic_pair(so, mr).second;
    ForwardTrace tr;
    const Eigen::MatrixXd a = model.gfm.forward(corrs, Mode::eval, &tr);
    const Eigen::MatrixXd b = model.gfm.forward(corrs, Mode::eval);
    const double d = (a - b).cwiseAbs().maxCoeff();
    ok = d < 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff());
    return "max abs diff " + num(d);
  }));

  out.push_back(check("icp_rmse_monotone", [&](bool& ok) {
    PointCloud src{random_points(300, rng), {}};
    const RigidTransform gt{axis_angle(Vec3(1, 2, 3).normalized(), 0.05), Vec3(0.02, -0.01, 0.03)};
    PointCloud dst{apply(gt, src.points), {}};
    IcpConfig ic;
    ic.max_corr_dist = 0.3;
    const auto r = icp_refine(src, dst, RigidTransform::identity(), ic);
    ok = std::is_sorted(r.rmse_history.rbegin(), r.rmse_history.rend()) &&
         pose_error(r.transform, gt).te < 1e-6;
    return "final rmse " + num(r.final_rmse) + " after " + std::to_string(r.iterations) + " iterations";
  }));

  return out;
}

}  // namespace dfc
