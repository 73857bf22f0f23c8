#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dfc/checkpoint.hpp"
#include "dfc/cloud.hpp"
#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"
#include "dfc/gfm_net.hpp"

namespace dfc {

struct LossReport {
  double l_c = 0.0;
  double l_t = 0.0;
  double total = 0.0;  // l_c + lambda * l_t
};

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

inline constexpr double kConfidenceClamp = 1e-7;

/// Mean binary cross entropy of confidences against {0, 1} labels, with the
/// confidences clamped to [eps, 1 - eps] and evaluated through their logits.
/// grad is d loss / d confidence. Throws LengthMismatch.
LossAndGrad classification_loss(const Eigen::VectorXd& confidences,
                                const std::vector<std::uint8_t>& labels);

/// Same loss taken directly on logits; grad is d loss / d logit.
LossAndGrad bce_with_logits(const Eigen::VectorXd& logits, const std::vector<std::uint8_t>& labels);

/// ||R_est^T R_gt - I||_F^2 + ||t_est - t_gt||^2.
double transformation_loss(const RigidTransform& est, const RigidTransform& gt);

/// l_i = ||gt(x_i) - y_i|| < tau.
std::vector<std::uint8_t> generate_labels(const CorrespondenceSet& corrs, const RigidTransform& gt,
                                          double tau);

struct TrainConfig {
  GfmConfig gfm = GfmConfig::desk();
  std::array<int, 2> mlp_hidden{128, 64};
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 0.5;
  double lambda = 1e-2;
  std::uint64_t seed = 0;
  int train_pairs = 500;
  int val_pairs = 50;
  SyntheticOptions data{256, 0.7, 0.01, 0.05};
  /// Stop once validation l_c drops below ratio * initial; 0 disables.
  double early_stop_ratio = 0.0;
  int threads = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  LossReport val;
  double train_l_c = 0.0;  // mean over the epoch's batches; 0 for epoch 0
};

struct TrainResult {
  DfcModel model;
  std::vector<EpochRecord> trace;  // trace[0] is the untrained model
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// A labelled synthetic correspondence set with its ground truth.
struct LabelledPair {
  CorrespondenceSet corrs;
  RigidTransform gt;
};

std::vector<LabelledPair> make_dataset(const SyntheticOptions& opts, int count, std::uint64_t seed);

/// Validation losses of a model in eval mode. l_t uses the
/// confidence-weighted Procrustes estimate over all correspondences.
LossReport evaluate(const DfcModel& model, const std::vector<LabelledPair>& pairs, double lambda,
                    int threads = 1);

/// Mini-batch gradient descent on l_c only. A zero learning rate freezes the
/// model, running statistics included. Throws DivergenceDetected.
TrainResult train(const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// CSV with header epoch,l_c,l_t,total,train_l_c.
void write_trace_csv(const std::vector<EpochRecord>& trace, const std::filesystem::path& path);

}  // namespace dfc
