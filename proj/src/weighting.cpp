#include "dfc/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfc/error.hpp"

namespace dfc {
namespace {

constexpr double kConfidenceFloor = 1e-12;

void he_init(Eigen::MatrixXd& w, int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / cols));
  w.resize(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
}

template <typename M>
ParamBlock block(std::string name, M& m) {
  return {std::move(name), {m.data(), static_cast<std::size_t>(m.size())}, m.rows(), m.cols()};
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

WeightMlp::WeightMlp(int in_dim, std::array<int, 2> hidden, Rng& rng) {
  if (in_dim < 1 || hidden[0] < 1 || hidden[1] < 1) {
    throw Error(ErrorCode::InvalidArgument, "MLP sizes must be positive");
  }
  he_init(w1_, hidden[0], in_dim, rng);
  he_init(w2_, hidden[1], hidden[0], rng);
  he_init(w3_, 1, hidden[1], rng);
  b1_ = Eigen::VectorXd::Zero(hidden[0]);
  b2_ = Eigen::VectorXd::Zero(hidden[1]);
  b3_ = Eigen::VectorXd::Zero(1);
}

Eigen::VectorXd WeightMlp::logits(const Eigen::MatrixXd& features, MlpTrace* trace) const {
  if (features.cols() != w1_.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "feature width " + std::to_string(features.cols()) +
                                              " does not match MLP input " + std::to_string(w1_.cols()));
  }
  Eigen::MatrixXd h1 = ((features * w1_.transpose()).rowwise() + b1_.transpose()).cwiseMax(0.0);
  Eigen::MatrixXd h2 = ((h1 * w2_.transpose()).rowwise() + b2_.transpose()).cwiseMax(0.0);
  Eigen::VectorXd out = (h2 * w3_.transpose()).col(0).array() + b3_(0);
  if (trace != nullptr) {
    trace->input = features;
    trace->hidden1 = std::move(h1);
    trace->hidden2 = std::move(h2);
  }
  return out;
}

Eigen::VectorXd WeightMlp::confidence(const Eigen::MatrixXd& features) const {
  return sigmoid(logits(features)).cwiseMax(kConfidenceFloor).cwiseMin(1.0 - kConfidenceFloor);
}

MlpGrads WeightMlp::backward(const MlpTrace& trace, const Eigen::VectorXd& d_logits) const {
  if (d_logits.size() != trace.input.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient length differs from row count");
  }
  MlpGrads g;
  g.w3 = d_logits.transpose() * trace.hidden2;
  g.b3 = Eigen::VectorXd::Constant(1, d_logits.sum());
  Eigen::MatrixXd d_h2 = d_logits * w3_;
  d_h2 = (trace.hidden2.array() > 0.0).select(d_h2, 0.0);
  g.w2 = d_h2.transpose() * trace.hidden1;
  g.b2 = d_h2.colwise().sum().transpose();
  Eigen::MatrixXd d_h1 = d_h2 * w2_;
  d_h1 = (trace.hidden1.array() > 0.0).select(d_h1, 0.0);
  g.w1 = d_h1.transpose() * trace.input;
  g.b1 = d_h1.colwise().sum().transpose();
  g.input = d_h1 * w1_;
  return g;
}

std::vector<ParamBlock> WeightMlp::parameters() {
  return {block("mlp.fc1.weight", w1_), block("mlp.fc1.bias", b1_),
          block("mlp.fc2.weight", w2_), block("mlp.fc2.bias", b2_),
          block("mlp.fc3.weight", w3_), block("mlp.fc3.bias", b3_)};
}

std::vector<ConstParamBlock> WeightMlp::state() const {
  std::vector<ConstParamBlock> out;
  auto add = [&out](const char* name, const auto& m) {
    out.push_back({name, {m.data(), static_cast<std::size_t>(m.size())}, m.rows(), m.cols()});
  };
  add("mlp.fc1.weight", w1_);
  add("mlp.fc1.bias", b1_);
  add("mlp.fc2.weight", w2_);
  add("mlp.fc2.bias", b2_);
  add("mlp.fc3.weight", w3_);
  add("mlp.fc3.bias", b3_);
  return out;
}

std::vector<ParamBlock> WeightMlp::gradient_blocks(MlpGrads& g) {
  return {block("mlp.fc1.weight", g.w1), block("mlp.fc1.bias", g.b1),
          block("mlp.fc2.weight", g.w2), block("mlp.fc2.bias", g.b2),
          block("mlp.fc3.weight", g.w3), block("mlp.fc3.bias", g.b3)};
}

CandidateSet sample_candidates(const Eigen::VectorXd& confidences, Eigen::Index n_s) {
  if (n_s < 1) throw Error(ErrorCode::InvalidArgument, "n_s must be >= 1");
  const Eigen::Index n = confidences.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto take = static_cast<std::ptrdiff_t>(std::min(n_s, n));
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return confidences(a) > confidences(b) || (confidences(a) == confidences(b) && a < b);
  });
  CandidateSet out;
  out.indices.assign(idx.begin(), idx.begin() + take);
  out.confidences.reserve(out.indices.size());
  for (auto i : out.indices) out.confidences.push_back(confidences(i));
  return out;
}

}  // namespace dfc
