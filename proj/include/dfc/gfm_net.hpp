#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfc/correspondence.hpp"
#include "dfc/geometry.hpp"

namespace dfc {

/// Named view over one contiguous parameter tensor (row-major shape
/// metadata over Eigen's column-major storage is not implied; values are in
/// storage order).
struct ParamBlock {
  std::string name;
  std::span<double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

struct ConstParamBlock {
  std::string name;
  std::span<const double> values;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Feature-embedding backend. gfm is the three-scale graph network;
/// dgcnn_like keeps only the first scale; pointnet_like drops the graph and
/// embeds each 6-D correspondence on its own.
enum class EmbeddingBackend { gfm, dgcnn_like, pointnet_like };

std::string to_string(EmbeddingBackend backend);
EmbeddingBackend embedding_backend_from_string(const std::string& name);

struct GfmConfig {
  EmbeddingBackend backend = EmbeddingBackend::gfm;
  int graph_k = 8;
  int edge_channels = 12;
  std::array<int, 3> scale_channels{32, 32, 64};
  int out_dim = 32;
  bool multiscale_stride = true;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  /// Throws InvalidArgument.
  void validate() const;
  /// Full-size network: k = 100, channels (64, 64, 128), D = 256.
  static GfmConfig full();
  /// Desk-scale training default: k = 8, channels (16, 16, 32), D = 32.
  static GfmConfig desk();
};

/// One 1x1 convolution followed by batch normalization (the BN shift acts as
/// the bias, so the convolution carries none).
struct ConvBn {
  std::string name;
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct ConvBnGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
};

/// k-NN graph over the correspondences in 6-D. Channel block [0, 6) is m_i,
/// [6, 12) is m_j - m_i; column n * k + s holds the s-th nearest neighbor of
/// correspondence n (ascending distance, ties by index, self excluded).
struct EdgeFeatures {
  Eigen::MatrixXd data;  // 12 x (N * k)
  std::vector<Eigen::Index> neighbors;
  Eigen::Index n = 0;
  int k = 0;

  double at(int channel, Eigen::Index i, int s) const { return data(channel, i * k + s); }
};

/// Throws TooFewCorrespondences when N <= k.
EdgeFeatures edge_features(const CorrespondenceSet& corrs, int k);

enum class Mode { train, eval };

struct ConvBnCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd xhat;
  Eigen::MatrixXd output;
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;
  Eigen::VectorXd inv_std;
};

/// Activations cached by a forward pass for backward.
struct ForwardTrace {
  Mode mode = Mode::eval;
  std::uint64_t fingerprint = 0;
  Eigen::Index n = 0;
  std::vector<int> spatial;  // spatial size seen by each layer
  std::vector<ConvBnCache> layers;
  std::vector<Eigen::Index> argmax;  // D x N, flattened column-major
};

/// Stable hash of the 6-D correspondence coordinates.
std::uint64_t fingerprint(const CorrespondenceSet& corrs);

class GfmNet {
 public:
  GfmNet() = default;
  /// He-initialized weights, unit BN scale, zero shift.
  GfmNet(const GfmConfig& config, Rng& rng);

  const GfmConfig& config() const { return config_; }

  /// N x D embedding. Train mode normalizes with batch statistics (running
  /// statistics are left untouched; see update_running_stats). Pass a trace
  /// to enable backward.
  Eigen::MatrixXd forward(const CorrespondenceSet& corrs, Mode mode,
                          ForwardTrace* trace = nullptr) const;

  /// Folds the batch statistics of a train-mode trace into the running
  /// statistics (momentum update, unbiased variance).
  void update_running_stats(const ForwardTrace& trace);

  /// Gradients of sum(grad_out .* F_M) with respect to every weight, BN
  /// scale and BN shift. Max-pooling routes to the recorded argmax.
  /// Throws StaleTrace when the trace was produced from other input.
  std::vector<ConvBnGrad> backward(const ForwardTrace& trace, const CorrespondenceSet& corrs,
                                   const Eigen::MatrixXd& grad_out) const;

  std::vector<ConvBn>& layers() { return layers_; }
  const std::vector<ConvBn>& layers() const { return layers_; }

  /// Trainable tensors (weight, gamma, beta per layer), in a fixed order.
  std::vector<ParamBlock> parameters();
  /// Everything a checkpoint stores, including running statistics.
  std::vector<ConstParamBlock> state() const;
  std::vector<ParamBlock> mutable_state();

  /// Flattens gradients in the same order as parameters().
  static std::vector<ParamBlock> gradient_blocks(std::vector<ConvBnGrad>& grads,
                                                 const std::vector<ConvBn>& layers);

 private:
  Eigen::MatrixXd input_tensor(const CorrespondenceSet& corrs, int& spatial) const;
  Eigen::MatrixXd forward_inference(const CorrespondenceSet& corrs) const;

  GfmConfig config_;
  std::vector<ConvBn> layers_;
};

}  // namespace dfc
