#include "dfc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "dfc/classic.hpp"
#include "dfc/error.hpp"
#include "dfc/parallel.hpp"
#include "dfc/procrustes.hpp"

namespace dfc {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_lengths(Eigen::Index n, std::size_t labels) {
  if (static_cast<std::size_t>(n) != labels) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(n) + " predictions vs " +
                                               std::to_string(labels) + " labels");
  }
  if (n == 0) throw Error(ErrorCode::LengthMismatch, "empty prediction vector");
}

void accumulate(std::vector<ConvBnGrad>& acc, const std::vector<ConvBnGrad>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i].weight += g[i].weight;
    acc[i].gamma += g[i].gamma;
    acc[i].beta += g[i].beta;
  }
}

void accumulate(MlpGrads& acc, const MlpGrads& g, bool first) {
  if (first) {
    acc = g;
    return;
  }
  acc.w1 += g.w1;
  acc.w2 += g.w2;
  acc.w3 += g.w3;
  acc.b1 += g.b1;
  acc.b2 += g.b2;
  acc.b3 += g.b3;
}

void sgd_step(const std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads,
              double scale) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].values.size(); ++j) {
      params[i].values[j] -= scale * grads[i].values[j];
    }
  }
}

struct PairStep {
  ForwardTrace trace;
  std::vector<ConvBnGrad> gfm;
  MlpGrads mlp;
  double loss = 0.0;
};

}  // namespace

LossAndGrad classification_loss(const Eigen::VectorXd& confidences,
                                const std::vector<std::uint8_t>& labels) {
  check_lengths(confidences.size(), labels.size());
  const auto n = static_cast<double>(confidences.size());
  LossAndGrad out;
  out.grad.resize(confidences.size());
  for (Eigen::Index i = 0; i < confidences.size(); ++i) {
    const double raw = confidences(i);
    const double c = std::clamp(raw, kConfidenceClamp, 1.0 - kConfidenceClamp);
    const double z = std::log(c) - std::log1p(-c);
    const double l = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    out.loss += softplus(z) - l * z;
    const bool inside = raw > kConfidenceClamp && raw < 1.0 - kConfidenceClamp;
    out.grad(i) = inside ? (c - l) / (c * (1.0 - c)) / n : 0.0;
  }
  out.loss /= n;
  return out;
}

LossAndGrad bce_with_logits(const Eigen::VectorXd& logits, const std::vector<std::uint8_t>& labels) {
  check_lengths(logits.size(), labels.size());
  const auto n = static_cast<double>(logits.size());
  LossAndGrad out;
  out.grad.resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits(i);
    const double l = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    out.loss += softplus(z) - l * z;
    out.grad(i) = (sigmoid(z) - l) / n;
  }
  out.loss /= n;
  return out;
}

double transformation_loss(const RigidTransform& est, const RigidTransform& gt) {
  const Mat3 d = est.rotation.transpose() * gt.rotation - Mat3::Identity();
  return d.squaredNorm() + (est.translation - gt.translation).squaredNorm();
}

std::vector<std::uint8_t> generate_labels(const CorrespondenceSet& corrs, const RigidTransform& gt,
                                          double tau) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(corrs.size()));
  for (Eigen::Index i = 0; i < corrs.size(); ++i) {
    const double r = (gt.rotation * corrs.src.col(i) + gt.translation - corrs.dst.col(i)).norm();
    out[static_cast<std::size_t>(i)] = r < tau ? 1 : 0;
  }
  return out;
}

void TrainConfig::validate() const {
  gfm.validate();
  if (epochs < 0 || batch_size < 1 || train_pairs < 1 || val_pairs < 1 || threads < 1) {
    throw Error(ErrorCode::InvalidArgument, "training sizes must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate) || !(lambda >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate and lambda must be finite and >= 0");
  }
  if (mlp_hidden[0] < 1 || mlp_hidden[1] < 1) {
    throw Error(ErrorCode::InvalidArgument, "mlp hidden sizes must be positive");
  }
  if (data.n_points <= gfm.graph_k || !(data.tau > 0.0) || data.outlier_ratio < 0.0 ||
      data.outlier_ratio > 1.0 || data.noise_sigma < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "invalid synthetic data settings");
  }
  if (early_stop_ratio < 0.0) throw Error(ErrorCode::InvalidArgument, "early_stop_ratio must be >= 0");
}

std::vector<LabelledPair> make_dataset(const SyntheticOptions& opts, int count, std::uint64_t seed) {
  std::vector<LabelledPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    auto [pair, corrs] = make_synthetic_pair(opts, rng);
    corrs.labels = generate_labels(corrs, pair.gt, opts.tau);
    out.push_back({std::move(corrs), pair.gt});
  }
  return out;
}

LossReport evaluate(const DfcModel& model, const std::vector<LabelledPair>& pairs, double lambda,
                    int threads) {
  std::vector<double> lc(pairs.size()), lt(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& p = pairs[i];
    const Eigen::MatrixXd f = model.gfm.forward(p.corrs, Mode::eval);
    const Eigen::VectorXd z = model.mlp.logits(f);
    lc[i] = bce_with_logits(z, p.corrs.labels).loss;
    const Eigen::VectorXd w = sigmoid(z);
    RigidTransform est;
    try {
      est = procrustes::solve({p.corrs.src, p.corrs.dst, w});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateGeometry && e.code() != ErrorCode::ZeroWeightSum) throw;
    }
    lt[i] = transformation_loss(est, p.gt);
  });
  LossReport r;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    r.l_c += lc[i];
    r.l_t += lt[i];
  }
  r.l_c /= static_cast<double>(pairs.size());
  r.l_t /= static_cast<double>(pairs.size());
  r.total = r.l_c + lambda * r.l_t;
  return r;
}

TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  Rng init_rng(cfg.seed);
  TrainResult res{DfcModel(cfg.gfm, cfg.mlp_hidden, init_rng), {}};
  auto& model = res.model;
  const auto train_set = make_dataset(cfg.data, cfg.train_pairs, derive_seed(cfg.seed, 1));
  const auto val_set = make_dataset(cfg.data, cfg.val_pairs, derive_seed(cfg.seed, 2));
  const bool frozen = cfg.learning_rate == 0.0;

  auto record = [&](int epoch, double train_l_c) {
    EpochRecord rec{epoch, evaluate(model, val_set, cfg.lambda, cfg.threads), train_l_c};
    if (!std::isfinite(rec.val.total)) {
      throw Error(ErrorCode::DivergenceDetected, "validation loss is not finite at epoch " +
                                                     std::to_string(epoch));
    }
    res.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
    return rec.val.l_c;
  };
  const double initial = record(0, 0.0);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      std::vector<PairStep> steps(b);
      parallel_for(b, cfg.threads, [&](std::size_t s) {
        const auto& p = train_set[order[start + s]];
        auto& st = steps[s];
        const Eigen::MatrixXd f = model.gfm.forward(p.corrs, Mode::train, &st.trace);
        MlpTrace mt;
        const Eigen::VectorXd z = model.mlp.logits(f, &mt);
        const auto lg = bce_with_logits(z, p.corrs.labels);
        st.loss = lg.loss;
        st.mlp = model.mlp.backward(mt, lg.grad);
        st.gfm = model.gfm.backward(st.trace, p.corrs, st.mlp.input);
      });

      std::vector<ConvBnGrad> gfm_acc;
      MlpGrads mlp_acc;
      double batch_loss = 0.0;
      for (std::size_t s = 0; s < b; ++s) {
        if (!std::isfinite(steps[s].loss)) {
          throw Error(ErrorCode::DivergenceDetected, "training loss is not finite at epoch " +
                                                         std::to_string(epoch));
        }
        batch_loss += steps[s].loss;
        accumulate(gfm_acc, steps[s].gfm);
        accumulate(mlp_acc, steps[s].mlp, s == 0);
      }
      loss_sum += batch_loss / static_cast<double>(b);
      ++batches;
      if (frozen) continue;

      const double scale = cfg.learning_rate / static_cast<double>(b);
      sgd_step(model.gfm.parameters(), GfmNet::gradient_blocks(gfm_acc, model.gfm.layers()), scale);
      sgd_step(model.mlp.parameters(), WeightMlp::gradient_blocks(mlp_acc), scale);
      for (const auto& st : steps) model.gfm.update_running_stats(st.trace);
    }
    const double val = record(epoch, loss_sum / static_cast<double>(batches));
    if (cfg.early_stop_ratio > 0.0 && val < cfg.early_stop_ratio * initial) break;
  }
  return res;
}

void write_trace_csv(const std::vector<EpochRecord>& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "epoch,l_c,l_t,total,train_l_c\n" << std::setprecision(17);
  for (const auto& r : trace) {
    out << r.epoch << ',' << r.val.l_c << ',' << r.val.l_t << ',' << r.val.total << ','
        << r.train_l_c << '\n';
  }
}

}  // namespace dfc
