#include "dfc/gfm_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dfc/error.hpp"
#include "dfc/knn.hpp"

namespace dfc {
namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

ConvBn make_layer(std::string name, int in, int out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
  ConvBn l;
  l.name = std::move(name);
  l.weight.resize(out, in);
  for (Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = normal(rng);
  l.gamma = Vector::Ones(out);
  l.beta = Vector::Zero(out);
  l.running_mean = Vector::Zero(out);
  l.running_var = Vector::Ones(out);
  return l;
}

Matrix conv_bn_forward(const ConvBn& layer, const Matrix& x, Mode mode, double eps,
                       ConvBnCache* cache) {
  Matrix z = layer.weight * x;
  const auto p = static_cast<double>(z.cols());
  Vector mean, var;
  if (mode == Mode::train) {
    mean = z.rowwise().sum() / p;
    z.colwise() -= mean;
    var = z.array().square().rowwise().sum() / p;
  } else {
    mean = layer.running_mean;
    var = layer.running_var;
    z.colwise() -= mean;
  }
  const Vector inv = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = inv.asDiagonal() * z;
  Matrix y = ((layer.gamma.asDiagonal() * xhat).colwise() + layer.beta).cwiseMax(0.0);
  if (cache != nullptr) {
    cache->input = x;
    cache->xhat = std::move(xhat);
    cache->output = y;
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
    cache->inv_std = inv;
  }
  return y;
}

/// Returns dL/dx and fills the parameter gradients.
Matrix conv_bn_backward(const ConvBn& layer, const ConvBnCache& cache, Mode mode,
                        const Matrix& d_out, ConvBnGrad& grad) {
  const Matrix dy = (cache.output.array() > 0.0).select(d_out, 0.0);
  grad.beta = dy.rowwise().sum();
  grad.gamma = dy.cwiseProduct(cache.xhat).rowwise().sum();
  Matrix dxhat = layer.gamma.asDiagonal() * dy;
  Matrix dz;
  if (mode == Mode::train) {
    const auto p = static_cast<double>(dy.cols());
    const Vector sum_dxhat = dxhat.rowwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).rowwise().sum();
    dz = dxhat;
    dz.colwise() -= sum_dxhat / p;
    dz -= (sum_dxhat_xhat / p).asDiagonal() * cache.xhat;
    dz = cache.inv_std.asDiagonal() * dz;
  } else {
    dz = cache.inv_std.asDiagonal() * dxhat;
  }
  grad.weight = dz * cache.input.transpose();
  return layer.weight.transpose() * dz;
}

// Column maps between spatial resolutions; column n * s + j is position j of
// correspondence n.
std::vector<Index> downsample_map(Index n, int s) {
  const int half = (s + 1) / 2;
  std::vector<Index> m(static_cast<std::size_t>(n * half));
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < half; ++j) m[static_cast<std::size_t>(i * half + j)] = i * s + 2 * j;
  }
  return m;
}

std::vector<Index> upsample_map(Index n, int from, int to) {
  std::vector<Index> m(static_cast<std::size_t>(n * to));
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < to; ++j) m[static_cast<std::size_t>(i * to + j)] = i * from + j / 2;
  }
  return m;
}

Matrix gather(const Matrix& x, const std::vector<Index>& map) {
  Matrix out(x.rows(), static_cast<Index>(map.size()));
  for (std::size_t j = 0; j < map.size(); ++j) out.col(static_cast<Index>(j)) = x.col(map[j]);
  return out;
}

void scatter_add(const Matrix& d_out, const std::vector<Index>& map, Matrix& d_in) {
  for (std::size_t j = 0; j < map.size(); ++j) d_in.col(map[j]) += d_out.col(static_cast<Index>(j));
}

}  // namespace

std::string to_string(EmbeddingBackend backend) {
  switch (backend) {
    case EmbeddingBackend::gfm: return "gfm";
    case EmbeddingBackend::dgcnn_like: return "dgcnn_like";
    case EmbeddingBackend::pointnet_like: return "pointnet_like";
  }
  return "gfm";
}

EmbeddingBackend embedding_backend_from_string(const std::string& name) {
  if (name == "gfm") return EmbeddingBackend::gfm;
  if (name == "dgcnn_like") return EmbeddingBackend::dgcnn_like;
  if (name == "pointnet_like") return EmbeddingBackend::pointnet_like;
  throw Error(ErrorCode::InvalidArgument, "unknown embedding backend '" + name + "'");
}

void GfmConfig::validate() const {
  if (graph_k < 2) throw Error(ErrorCode::InvalidArgument, "graph_k must be >= 2");
  if (out_dim < 8) throw Error(ErrorCode::InvalidArgument, "out_dim must be >= 8");
  if (edge_channels < 1 || std::any_of(scale_channels.begin(), scale_channels.end(),
                                       [](int c) { return c < 1; })) {
    throw Error(ErrorCode::InvalidArgument, "channel counts must be positive");
  }
  if (!(bn_epsilon > 0.0) || !(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "bad batch-norm settings");
  }
}

GfmConfig GfmConfig::full() {
  GfmConfig c;
  c.graph_k = 100;
  c.scale_channels = {64, 64, 128};
  c.out_dim = 256;
  return c;
}

GfmConfig GfmConfig::desk() {
  GfmConfig c;
  c.graph_k = 8;
  c.scale_channels = {16, 16, 32};
  c.out_dim = 32;
  return c;
}

EdgeFeatures edge_features(const CorrespondenceSet& corrs, int k) {
  const Index n = corrs.size();
  if (k < 1 || n <= k) {
    throw Error(ErrorCode::TooFewCorrespondences,
                "need more than k = " + std::to_string(k) + " correspondences, got " + std::to_string(n));
  }
  const Matrix m = corrs.stacked_6d();
  std::vector<Index> self(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) self[static_cast<std::size_t>(i)] = i;
  const auto nbs = knn_batch(m, m, k, self);
  EdgeFeatures ef;
  ef.n = n;
  ef.k = k;
  ef.data.resize(12, n * k);
  ef.neighbors.resize(static_cast<std::size_t>(n * k));
  for (Index i = 0; i < n; ++i) {
    for (int s = 0; s < k; ++s) {
      const Index j = nbs[static_cast<std::size_t>(i * k + s)].index;
      const Index col = i * k + s;
      ef.neighbors[static_cast<std::size_t>(col)] = j;
      ef.data.block<6, 1>(0, col) = m.col(i);
      ef.data.block<6, 1>(6, col) = m.col(j) - m.col(i);
    }
  }
  return ef;
}

std::uint64_t fingerprint(const CorrespondenceSet& corrs) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const double* p, Index count) {
    for (Index i = 0; i < count; ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, p + i, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  };
  mix(corrs.src.data(), corrs.src.size());
  mix(corrs.dst.data(), corrs.dst.size());
  return h;
}

GfmNet::GfmNet(const GfmConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto [c1, c2, c3] = config_.scale_channels;
  const int e = config_.edge_channels;
  switch (config_.backend) {
    case EmbeddingBackend::gfm:
      layers_.push_back(make_layer("edge", 12, e, rng));
      layers_.push_back(make_layer("scale1.0", e, c1, rng));
      layers_.push_back(make_layer("scale1.1", c1, c1, rng));
      layers_.push_back(make_layer("scale2.0", c1, c2, rng));
      layers_.push_back(make_layer("scale2.1", c2, c2, rng));
      layers_.push_back(make_layer("scale3.0", c2, c3, rng));
      layers_.push_back(make_layer("scale3.1", c3, c3, rng));
      layers_.push_back(make_layer("merge", c1 + c2 + c3, config_.out_dim, rng));
      break;
    case EmbeddingBackend::dgcnn_like:
      layers_.push_back(make_layer("edge", 12, e, rng));
      layers_.push_back(make_layer("scale1.0", e, c1, rng));
      layers_.push_back(make_layer("scale1.1", c1, c1, rng));
      layers_.push_back(make_layer("merge", c1, config_.out_dim, rng));
      break;
    case EmbeddingBackend::pointnet_like:
      layers_.push_back(make_layer("scale1.0", 6, c1, rng));
      layers_.push_back(make_layer("scale1.1", c1, c1, rng));
      layers_.push_back(make_layer("merge", c1, config_.out_dim, rng));
      break;
  }
}

// Each side is shifted to its own centroid so the network never sees the
// absolute placement of a pair. Eval-mode BN cannot remove it otherwise.
Matrix GfmNet::input_tensor(const CorrespondenceSet& corrs, int& spatial) const {
  CorrespondenceSet centered;
  centered.src = corrs.src.colwise() - corrs.src.rowwise().mean();
  centered.dst = corrs.dst.colwise() - corrs.dst.rowwise().mean();
  if (config_.backend == EmbeddingBackend::pointnet_like) {
    spatial = 1;
    return centered.stacked_6d();
  }
  spatial = config_.graph_k;
  return edge_features(centered, config_.graph_k).data;
}

Matrix GfmNet::forward(const CorrespondenceSet& corrs, Mode mode, ForwardTrace* trace) const {
  if (corrs.dst.cols() != corrs.size()) throw Error(ErrorCode::ShapeMismatch, "src/dst mismatch");
  if (layers_.empty()) throw Error(ErrorCode::ShapeMismatch, "network has no layers");
  if (mode == Mode::eval && trace == nullptr) return forward_inference(corrs);
  const Index n = corrs.size();
  const double eps = config_.bn_epsilon;
  int s0 = 0;
  Matrix x = input_tensor(corrs, s0);

  if (trace != nullptr) {
    trace->mode = mode;
    trace->fingerprint = fingerprint(corrs);
    trace->n = n;
    trace->layers.assign(layers_.size(), {});
    trace->spatial.assign(layers_.size(), s0);
  }
  auto run = [&](std::size_t li, const Matrix& in) {
    return conv_bn_forward(layers_[li], in, mode, eps, trace ? &trace->layers[li] : nullptr);
  };

  Matrix merged;
  std::size_t merge_idx = 0;
  if (config_.backend == EmbeddingBackend::gfm) {
    const Matrix g = run(0, x);
    const Matrix f1 = run(2, run(1, g));
    int s2 = s0;
    Matrix x3 = f1;
    if (config_.multiscale_stride) {
      x3 = gather(f1, downsample_map(n, s0));
      s2 = (s0 + 1) / 2;
    }
    const Matrix f2 = run(4, run(3, x3));
    int s3 = s2;
    Matrix x5 = f2;
    if (config_.multiscale_stride) {
      x5 = gather(f2, downsample_map(n, s2));
      s3 = (s2 + 1) / 2;
    }
    const Matrix f3 = run(6, run(5, x5));
    if (trace != nullptr) {
      trace->spatial = {s0, s0, s0, s2, s2, s3, s3, s0};
    }
    Matrix u2 = f2;
    Matrix u3 = f3;
    if (config_.multiscale_stride) {
      u2 = gather(f2, upsample_map(n, s2, s0));
      u3 = gather(gather(f3, upsample_map(n, s3, s2)), upsample_map(n, s2, s0));
    }
    Matrix cat(f1.rows() + u2.rows() + u3.rows(), f1.cols());
    cat << f1, u2, u3;
    merge_idx = 7;
    merged = run(merge_idx, cat);
  } else if (config_.backend == EmbeddingBackend::dgcnn_like) {
    const Matrix f1 = run(2, run(1, run(0, x)));
    merge_idx = 3;
    merged = run(merge_idx, f1);
  } else {
    const Matrix f1 = run(1, run(0, x));
    merge_idx = 2;
    merged = run(merge_idx, f1);
  }

  const Index d = merged.rows();
  Matrix out(n, d);
  if (trace != nullptr) trace->argmax.assign(static_cast<std::size_t>(n * d), 0);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < d; ++c) {
      Index best = i * s0;
      double v = merged(c, best);
      for (int s = 1; s < s0; ++s) {
        const double w = merged(c, i * s0 + s);
        if (w > v) {
          v = w;
          best = i * s0 + s;
        }
      }
      out(i, c) = v;
      if (trace != nullptr) trace->argmax[static_cast<std::size_t>(i * d + c)] = best;
    }
  }
  return out;
}

// Eval mode without a trace. BN folds into the weights, and the merge layer
// is split by input block so each scale is projected at its own resolution
// before the nearest-repeat upsampling (a linear map commutes with it).
Matrix GfmNet::forward_inference(const CorrespondenceSet& corrs) const {
  const Index n = corrs.size();
  const double eps = config_.bn_epsilon;
  int s0 = 0;
  const Matrix x = input_tensor(corrs, s0);

  std::vector<Matrix> weights(layers_.size());
  std::vector<Vector> shifts(layers_.size());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const Vector a = l.gamma.array() * (l.running_var.array() + eps).rsqrt();
    weights[li] = a.asDiagonal() * l.weight;
    shifts[li] = l.beta - a.cwiseProduct(l.running_mean);
  }
  auto run = [&](std::size_t li, const Matrix& in) {
    Matrix y(weights[li].rows(), in.cols());
    y.noalias() = weights[li] * in;
    y.colwise() += shifts[li];
    return Matrix(y.cwiseMax(0.0));
  };

  // Projected blocks and the column each output position reads from them.
  std::vector<Matrix> parts;
  std::vector<std::vector<Index>> maps;
  std::size_t merge_idx = 0;
  auto identity_map = [&] {
    std::vector<Index> m(static_cast<std::size_t>(n * s0));
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = static_cast<Index>(j);
    return m;
  };
  if (config_.backend == EmbeddingBackend::gfm) {
    const auto [c1, c2, c3] = config_.scale_channels;
    const Matrix& wm = weights[7];
    merge_idx = 7;
    const Matrix f1 = run(2, run(1, run(0, x)));
    parts.push_back(wm.leftCols(c1) * f1);
    maps.push_back(identity_map());
    if (config_.multiscale_stride) {
      const int s2 = (s0 + 1) / 2;
      const int s3 = (s2 + 1) / 2;
      const Matrix f2 = run(4, run(3, gather(f1, downsample_map(n, s0))));
      const Matrix f3 = run(6, run(5, gather(f2, downsample_map(n, s2))));
      parts.push_back(wm.middleCols(c1, c2) * f2);
      maps.push_back(upsample_map(n, s2, s0));
      parts.push_back(wm.rightCols(c3) * f3);
      const auto up32 = upsample_map(n, s3, s2);
      auto up = upsample_map(n, s2, s0);
      for (auto& j : up) j = up32[static_cast<std::size_t>(j)];
      maps.push_back(std::move(up));
    } else {
      const Matrix f2 = run(4, run(3, f1));
      const Matrix f3 = run(6, run(5, f2));
      parts.push_back(wm.middleCols(c1, c2) * f2);
      maps.push_back(identity_map());
      parts.push_back(wm.rightCols(c3) * f3);
      maps.push_back(identity_map());
    }
  } else if (config_.backend == EmbeddingBackend::dgcnn_like) {
    merge_idx = 3;
    parts.push_back(weights[3] * run(2, run(1, run(0, x))));
    maps.push_back(identity_map());
  } else {
    merge_idx = 2;
    parts.push_back(weights[2] * run(1, run(0, x)));
    maps.push_back(identity_map());
  }

  const Vector& shift = shifts[merge_idx];
  const Index d = shift.size();
  Matrix out(n, d);
  Vector acc(d);
  Vector best(d);
  for (Index i = 0; i < n; ++i) {
    for (int s = 0; s < s0; ++s) {
      const Index col = i * s0 + s;
      acc = shift;
      for (std::size_t p = 0; p < parts.size(); ++p) acc += parts[p].col(maps[p][static_cast<std::size_t>(col)]);
      best = s == 0 ? acc : best.cwiseMax(acc);
    }
    out.row(i) = best.cwiseMax(0.0).transpose();
  }
  return out;
}

void GfmNet::update_running_stats(const ForwardTrace& trace) {
  if (trace.mode != Mode::train) return;
  const double m = config_.bn_momentum;
  for (std::size_t li = 0; li < layers_.size() && li < trace.layers.size(); ++li) {
    const auto& c = trace.layers[li];
    const auto p = static_cast<double>(c.xhat.cols());
    const double unbias = p > 1.0 ? p / (p - 1.0) : 1.0;
    layers_[li].running_mean = (1.0 - m) * layers_[li].running_mean + m * c.batch_mean;
    layers_[li].running_var = (1.0 - m) * layers_[li].running_var + m * unbias * c.batch_var;
  }
}

std::vector<ConvBnGrad> GfmNet::backward(const ForwardTrace& trace, const CorrespondenceSet& corrs,
                                         const Matrix& grad_out) const {
  if (trace.layers.size() != layers_.size() || trace.fingerprint != fingerprint(corrs) ||
      trace.n != corrs.size()) {
    throw Error(ErrorCode::StaleTrace, "trace does not belong to this input");
  }
  const Index n = trace.n;
  const Index d = config_.out_dim;
  if (grad_out.rows() != n || grad_out.cols() != d) {
    throw Error(ErrorCode::ShapeMismatch, "grad_out must be N x D");
  }
  const Mode mode = trace.mode;
  std::vector<ConvBnGrad> grads(layers_.size());
  auto back = [&](std::size_t li, const Matrix& d_out) {
    return conv_bn_backward(layers_[li], trace.layers[li], mode, d_out, grads[li]);
  };

  const std::size_t merge_idx = layers_.size() - 1;
  const int s0 = trace.spatial.front();
  Matrix d_merged = Matrix::Zero(d, n * s0);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < d; ++c) {
      d_merged(c, trace.argmax[static_cast<std::size_t>(i * d + c)]) += grad_out(i, c);
    }
  }
  Matrix d_cat = back(merge_idx, d_merged);

  if (config_.backend == EmbeddingBackend::gfm) {
    const auto [c1, c2, c3] = config_.scale_channels;
    const int s2 = trace.spatial[3];
    const int s3 = trace.spatial[5];
    Matrix d_f1 = d_cat.topRows(c1);
    Matrix d_f2, d_f3;
    if (config_.multiscale_stride) {
      d_f2 = Matrix::Zero(c2, n * s2);
      scatter_add(d_cat.middleRows(c1, c2), upsample_map(n, s2, s0), d_f2);
      Matrix d_mid = Matrix::Zero(c3, n * s2);
      scatter_add(d_cat.bottomRows(c3), upsample_map(n, s2, s0), d_mid);
      d_f3 = Matrix::Zero(c3, n * s3);
      scatter_add(d_mid, upsample_map(n, s3, s2), d_f3);
    } else {
      d_f2 = d_cat.middleRows(c1, c2);
      d_f3 = d_cat.bottomRows(c3);
    }
    const Matrix d_x5 = back(5, back(6, d_f3));
    if (config_.multiscale_stride) {
      scatter_add(d_x5, downsample_map(n, s2), d_f2);
    } else {
      d_f2 += d_x5;
    }
    const Matrix d_x3 = back(3, back(4, d_f2));
    if (config_.multiscale_stride) {
      scatter_add(d_x3, downsample_map(n, s0), d_f1);
    } else {
      d_f1 += d_x3;
    }
    back(0, back(1, back(2, d_f1)));
  } else if (config_.backend == EmbeddingBackend::dgcnn_like) {
    back(0, back(1, back(2, d_cat)));
  } else {
    back(0, back(1, d_cat));
  }
  return grads;
}

std::vector<ParamBlock> GfmNet::parameters() {
  std::vector<ParamBlock> out;
  for (auto& l : layers_) {
    out.push_back({l.name + ".weight", {l.weight.data(), static_cast<std::size_t>(l.weight.size())},
                   l.weight.rows(), l.weight.cols()});
    out.push_back({l.name + ".gamma", {l.gamma.data(), static_cast<std::size_t>(l.gamma.size())},
                   l.gamma.size(), 1});
    out.push_back({l.name + ".beta", {l.beta.data(), static_cast<std::size_t>(l.beta.size())},
                   l.beta.size(), 1});
  }
  return out;
}

std::vector<ParamBlock> GfmNet::mutable_state() {
  auto out = parameters();
  for (auto& l : layers_) {
    out.push_back({l.name + ".running_mean",
                   {l.running_mean.data(), static_cast<std::size_t>(l.running_mean.size())},
                   l.running_mean.size(), 1});
    out.push_back({l.name + ".running_var",
                   {l.running_var.data(), static_cast<std::size_t>(l.running_var.size())},
                   l.running_var.size(), 1});
  }
  return out;
}

std::vector<ConstParamBlock> GfmNet::state() const {
  std::vector<ConstParamBlock> out;
  auto add = [&out](const std::string& name, const auto& m) {
    out.push_back({name, {m.data(), static_cast<std::size_t>(m.size())}, m.rows(), m.cols()});
  };
  for (const auto& l : layers_) {
    add(l.name + ".weight", l.weight);
    add(l.name + ".gamma", l.gamma);
    add(l.name + ".beta", l.beta);
  }
  for (const auto& l : layers_) {
    add(l.name + ".running_mean", l.running_mean);
    add(l.name + ".running_var", l.running_var);
  }
  return out;
}

std::vector<ParamBlock> GfmNet::gradient_blocks(std::vector<ConvBnGrad>& grads,
                                                const std::vector<ConvBn>& layers) {
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& g = grads[i];
    const auto& name = layers[i].name;
    out.push_back({name + ".weight", {g.weight.data(), static_cast<std::size_t>(g.weight.size())},
                   g.weight.rows(), g.weight.cols()});
    out.push_back({name + ".gamma", {g.gamma.data(), static_cast<std::size_t>(g.gamma.size())},
                   g.gamma.size(), 1});
    out.push_back({name + ".beta", {g.beta.data(), static_cast<std::size_t>(g.beta.size())},
                   g.beta.size(), 1});
  }
  return out;
}

}  // namespace dfc
