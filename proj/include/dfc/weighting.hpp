#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "dfc/geometry.hpp"
#include "dfc/gfm_net.hpp"

namespace dfc {

struct MlpTrace {
  Eigen::MatrixXd input;    // N x D
  Eigen::MatrixXd hidden1;  // N x h1, post-ReLU
  Eigen::MatrixXd hidden2;  // N x h2, post-ReLU
};

struct MlpGrads {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  Eigen::MatrixXd input;  // dL/dF_M
};

/// Three fully connected layers (D -> h1 -> h2 -> 1), ReLU after the first
/// two, applied independently to every row of F_M.
class WeightMlp {
 public:
  WeightMlp() = default;
  WeightMlp(int in_dim, std::array<int, 2> hidden, Rng& rng);

  int in_dim() const { return static_cast<int>(w1_.cols()); }
  std::array<int, 2> hidden() const {
    return {static_cast<int>(w1_.rows()), static_cast<int>(w2_.rows())};
  }

  /// Raw outputs of the last layer. Throws ShapeMismatch.
  Eigen::VectorXd logits(const Eigen::MatrixXd& features, MlpTrace* trace = nullptr) const;
  /// Logistic of the logits, kept strictly inside (0, 1).
  Eigen::VectorXd confidence(const Eigen::MatrixXd& features) const;

  MlpGrads backward(const MlpTrace& trace, const Eigen::VectorXd& d_logits) const;

  std::vector<ParamBlock> parameters();
  std::vector<ConstParamBlock> state() const;
  static std::vector<ParamBlock> gradient_blocks(MlpGrads& grads);

  Eigen::MatrixXd& w1() { return w1_; }
  Eigen::MatrixXd& w2() { return w2_; }
  Eigen::MatrixXd& w3() { return w3_; }
  Eigen::VectorXd& b1() { return b1_; }
  Eigen::VectorXd& b2() { return b2_; }
  Eigen::VectorXd& b3() { return b3_; }

 private:
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

double sigmoid(double x);
Eigen::VectorXd sigmoid(const Eigen::VectorXd& x);

/// The n_s most confident correspondences, most confident first.
struct CandidateSet {
  std::vector<Eigen::Index> indices;
  std::vector<double> confidences;
};

/// One-shot top-n_s selection; ties go to the lower index. Returns all N when
/// n_s exceeds N.
CandidateSet sample_candidates(const Eigen::VectorXd& confidences, Eigen::Index n_s);

}  // namespace dfc
