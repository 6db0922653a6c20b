#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "ppsl/checkpoint.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/nn.hpp"

namespace ppsl {

struct EncoderConfig {
  int in_dim = 5;
  int hidden = 128;
  int dim = 128;
  double tau = 0.1;
  double rho = 0.85;
  double lambda = 1.0;
  int k = 2;
  int batch = 256;
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t ego_cap = 2000;

  void validate() const {
    if (!(tau > 0)) throw Error("encoder: tau must be positive");
    if (!(rho > 0 && rho <= 1)) throw Error("encoder: rho must be in (0, 1]");
    if (!(lambda >= 0)) throw Error("encoder: lambda must be non-negative");
    if (in_dim <= 0 || hidden <= 0 || dim <= 0) throw Error("encoder: dimensions must be positive");
    if (k < 0 || batch <= 0 || epochs < 0 || !(lr >= 0)) throw Error("encoder: invalid training settings");
  }
};

/// Two graph-convolution layers, input -> hidden -> dim, ReLU in between.
struct EncoderWeights {
  Dense conv1;
  Dense conv2;

  template <class F>
  void for_each_block(F&& f) {
    f("conv1.weight", conv1.weight);
    f("conv1.bias", conv1.bias);
    f("conv2.weight", conv2.weight);
    f("conv2.bias", conv2.bias);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f("conv1.weight", conv1.weight);
    f("conv1.bias", conv1.bias);
    f("conv2.weight", conv2.weight);
    f("conv2.bias", conv2.bias);
  }
};

struct EncoderParams {
  EncoderWeights weights;
  EncoderConfig config;
};

/// Per-node embeddings, one row per internal node id.
using EmbeddingTable = Matrix;

inline EncoderParams init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p;
  p.config = cfg;
  p.weights.conv1 = Dense(cfg.in_dim, cfg.hidden);
  p.weights.conv2 = Dense(cfg.hidden, cfg.dim);
  Rng rng(cfg.seed);
  glorot(p.weights.conv1.weight, rng);
  glorot(p.weights.conv2.weight, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Graph convolution

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// D^-1/2 (A + I) D^-1/2 for a local adjacency list.
inline SparseMatrix normalized_adjacency(const std::vector<std::vector<std::uint32_t>>& adjacency) {
  const auto n = static_cast<Eigen::Index>(adjacency.size());
  std::vector<double> inv_sqrt(adjacency.size());
  for (std::size_t i = 0; i < adjacency.size(); ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(adjacency[i].size() + 1));
  std::vector<Eigen::Triplet<double>> t;
  std::size_t nnz = adjacency.size();
  for (const auto& a : adjacency) nnz += a.size();
  t.reserve(nnz);
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    t.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (auto j : adjacency[i]) t.emplace_back(i, j, inv_sqrt[i] * inv_sqrt[j]);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

inline std::vector<std::vector<std::uint32_t>> full_adjacency(const Graph& g) {
  std::vector<std::vector<std::uint32_t>> adj(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto nb = g.neighbors(v);
    adj[v].assign(nb.begin(), nb.end());
  }
  return adj;
}

struct GcnCache {
  SparseMatrix adj;
  Matrix ax;    // A X
  Matrix pre1;  // A X W1 + b1
  Matrix ah1;   // A relu(pre1)
  Matrix out;
};

inline GcnCache gcn_forward(const EncoderWeights& w, SparseMatrix adj, const Matrix& x) {
  GcnCache c;
  c.adj = std::move(adj);
  c.ax = c.adj * x;
  c.pre1 = w.conv1.forward(c.ax);
  c.ah1 = c.adj * relu(c.pre1);
  c.out = w.conv2.forward(c.ah1);
  return c;
}

/// Accumulates parameter gradients for the output gradient `dout`.
inline void gcn_backward(const EncoderWeights& w, const GcnCache& c, const Matrix& dout, EncoderWeights& grad) {
  grad.conv2.weight.noalias() += c.ah1.transpose() * dout;
  grad.conv2.bias += dout.colwise().sum();
  // A is symmetric, so A^T = A.
  Matrix dh1 = c.adj * (dout * w.conv2.weight.transpose());
  Matrix dpre1 = relu_backward(dh1, c.pre1);
  grad.conv1.weight.noalias() += c.ax.transpose() * dpre1;
  grad.conv1.bias += dpre1.colwise().sum();
}

inline Matrix gather_rows(const Matrix& table, std::span<const NodeId> nodes) {
  Matrix x(static_cast<Eigen::Index>(nodes.size()), table.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = table.row(nodes[i]);
  return x;
}

struct SubgraphEncoding {
  Matrix nodes;      // row i encodes subgraph node i
  RowVector pooled;  // sum of rows
};

inline SubgraphEncoding encode_subgraph(const EncoderParams& params, const Subgraph& s, const FeatureTable& feats) {
  if (s.size() == 0) throw Error("encode_subgraph: empty subgraph");
  if (feats.cols() != params.weights.conv1.weight.rows())
    throw Error("encode_subgraph: feature dimension " + std::to_string(feats.cols()) + " does not match encoder input " +
                std::to_string(params.weights.conv1.weight.rows()));
  for (NodeId v : s.nodes)
    if (v >= feats.rows()) throw Error("encode_subgraph: features do not cover node " + std::to_string(v));
  auto c = gcn_forward(params.weights, normalized_adjacency(s.adjacency), gather_rows(feats, s.nodes));
  SubgraphEncoding e;
  e.pooled = c.out.colwise().sum();
  e.nodes = std::move(c.out);
  return e;
}

inline EmbeddingTable encode_all(const EncoderParams& params, const Graph& g, const FeatureTable& feats) {
  if (feats.rows() != static_cast<Eigen::Index>(g.num_nodes()) || feats.cols() != params.weights.conv1.weight.rows())
    throw Error("encode_all: feature table shape does not match graph/encoder");
  return gcn_forward(params.weights, normalized_adjacency(full_adjacency(g)), feats).out;
}

/// Sum-pooled community embedding.
inline RowVector embed_community(const EmbeddingTable& table, std::span<const NodeId> members) {
  if (members.empty()) throw Error("embed_community: empty community");
  RowVector z = RowVector::Zero(table.cols());
  for (NodeId v : members) {
    if (v >= table.rows()) throw Error("embed_community: invalid node id " + std::to_string(v));
    z += table.row(v);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Contrastive losses

inline constexpr double kNormEps = 1e-8;

inline double stabilized_norm(const RowVector& v) { return std::sqrt(v.squaredNorm() + kNormEps * kNormEps); }

inline double cosine_similarity(const RowVector& a, const RowVector& b) {
  return a.dot(b) / (stabilized_norm(a) * stabilized_norm(b));
}

struct ContrastiveLoss {
  double value = 0;
  Matrix grad_anchor;
  Matrix grad_positive;
};

/// sum_i -log softmax_j(cos(a_i, p_j) / tau)[i], with gradients w.r.t. both
/// row sets.
inline ContrastiveLoss info_nce(const Matrix& anchors, const Matrix& positives, double tau) {
  if (anchors.rows() == 0 || anchors.rows() != positives.rows() || anchors.cols() != positives.cols())
    throw Error("info_nce: batch shape mismatch");
  if (!(tau > 0)) throw Error("info_nce: tau must be positive");
  const Eigen::Index b = anchors.rows();
  Vector na(b), np(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    na(i) = stabilized_norm(anchors.row(i));
    np(i) = stabilized_norm(positives.row(i));
  }
  Matrix ua = na.cwiseInverse().asDiagonal() * anchors;
  Matrix up = np.cwiseInverse().asDiagonal() * positives;
  Matrix logits = (ua * up.transpose()) / tau;

  ContrastiveLoss out;
  Matrix dlogits(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    Vector row = logits.row(i).transpose();
    double mx = row.maxCoeff();
    double log_sum = std::log((row.array() - mx).exp().sum());
    double lse = mx + log_sum;
    out.value += (mx - row(i)) + log_sum;
    dlogits.row(i) = (row.array() - lse).exp().matrix().transpose();
    dlogits(i, i) -= 1.0;
  }
  dlogits /= tau;
  Matrix dua = dlogits * up;
  Matrix dup = dlogits.transpose() * ua;
  // d(v/|v|)/dv = (I - u u^T) / |v|
  out.grad_anchor.resize(b, anchors.cols());
  out.grad_positive.resize(b, anchors.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    out.grad_anchor.row(i) = (dua.row(i) - dua.row(i).dot(ua.row(i)) * ua.row(i)) / na(i);
    out.grad_positive.row(i) = (dup.row(i) - dup.row(i).dot(up.row(i)) * up.row(i)) / np(i);
  }
  return out;
}

/// Node vs. its own local structure, contrasted with the other structures in
/// the batch.
inline ContrastiveLoss loss_ns(const Matrix& node_vectors, const Matrix& structure_vectors, double tau) {
  return info_nce(node_vectors, structure_vectors, tau);
}

/// Local structure vs. its corrupted view.
inline ContrastiveLoss loss_ss(const Matrix& structure_vectors, const Matrix& corrupted_vectors, double tau) {
  return info_nce(structure_vectors, corrupted_vectors, tau);
}

// ---------------------------------------------------------------------------
// Pre-training

/// Everything random about one batch, fixed up front so the objective is a
/// deterministic function of the weights.
struct BatchPlan {
  std::vector<NodeId> batch;
  Subgraph context;                                // induced union of the batch's egos
  std::vector<std::uint32_t> anchor_local;         // batch node -> row in context
  std::vector<std::vector<std::uint32_t>> egos;    // ego members -> rows in context
  std::vector<Subgraph> corrupted;
};

inline BatchPlan plan_batch(const Graph& g, std::span<const NodeId> batch, const EncoderConfig& cfg, Rng& rng) {
  BatchPlan plan;
  plan.batch.assign(batch.begin(), batch.end());
  std::vector<Subgraph> egos;
  egos.reserve(batch.size());
  std::vector<NodeId> all;
  for (NodeId v : batch) {
    egos.push_back(k_ego(g, v, cfg.k, cfg.ego_cap));
    all.insert(all.end(), egos.back().nodes.begin(), egos.back().nodes.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  plan.context = induced_subgraph(g, all, plan.batch);
  auto local = [&](NodeId v) {
    return static_cast<std::uint32_t>(std::lower_bound(all.begin(), all.end(), v) - all.begin());
  };
  for (std::size_t i = 0; i < batch.size(); ++i) {
    plan.anchor_local.push_back(local(batch[i]));
    std::vector<std::uint32_t> rows;
    rows.reserve(egos[i].size());
    for (NodeId u : egos[i].nodes) rows.push_back(local(u));
    plan.egos.push_back(std::move(rows));
    plan.corrupted.push_back(corrupt(egos[i], cfg.rho, rng));
  }
  return plan;
}

struct BatchObjective {
  double loss_ns = 0;
  double loss_ss = 0;
  double total = 0;  // w_ns * loss_ns + w_ss * loss_ss
  EncoderWeights grad;
};

inline BatchObjective batch_objective(const EncoderWeights& w, const BatchPlan& plan, const FeatureTable& feats,
                                      double tau, double weight_ns, double weight_ss) {
  const auto b = static_cast<Eigen::Index>(plan.batch.size());
  auto ctx = gcn_forward(w, normalized_adjacency(plan.context.adjacency), gather_rows(feats, plan.context.nodes));
  const Eigen::Index d = ctx.out.cols();
  Matrix z_node(b, d), z_struct(b, d), z_corrupt(b, d);
  std::vector<GcnCache> corrupt_caches;
  corrupt_caches.reserve(plan.corrupted.size());
  for (Eigen::Index i = 0; i < b; ++i) {
    z_node.row(i) = ctx.out.row(plan.anchor_local[i]);
    RowVector s = RowVector::Zero(d);
    for (auto r : plan.egos[i]) s += ctx.out.row(r);
    z_struct.row(i) = s;
    const auto& cs = plan.corrupted[i];
    corrupt_caches.push_back(gcn_forward(w, normalized_adjacency(cs.adjacency), gather_rows(feats, cs.nodes)));
    z_corrupt.row(i) = corrupt_caches.back().out.colwise().sum();
  }

  auto ns = loss_ns(z_node, z_struct, tau);
  auto ss = loss_ss(z_struct, z_corrupt, tau);
  BatchObjective out;
  out.loss_ns = ns.value;
  out.loss_ss = ss.value;
  out.total = weight_ns * ns.value + weight_ss * ss.value;
  out.grad = zeros_like(w);

  Matrix d_node = weight_ns * ns.grad_anchor;
  Matrix d_struct = weight_ns * ns.grad_positive + weight_ss * ss.grad_anchor;
  Matrix d_corrupt = weight_ss * ss.grad_positive;

  Matrix dctx = Matrix::Zero(ctx.out.rows(), d);
  for (Eigen::Index i = 0; i < b; ++i) {
    dctx.row(plan.anchor_local[i]) += d_node.row(i);
    for (auto r : plan.egos[i]) dctx.row(r) += d_struct.row(i);
  }
  gcn_backward(w, ctx, dctx, out.grad);
  if (weight_ss != 0.0) {
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& c = corrupt_caches[i];
      Matrix dout = d_corrupt.row(i).replicate(c.out.rows(), 1);
      gcn_backward(w, c, dout, out.grad);
    }
  }
  return out;
}

struct PretrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;  // mean per-item combined loss
};

/// Minimizes L_ns + lambda * L_ss with Adam over shuffled batches of nodes.
inline PretrainResult pretrain_encoder(const Graph& g, const FeatureTable& feats, EncoderParams params, Rng& rng) {
  const auto& cfg = params.config;
  cfg.validate();
  if (g.num_nodes() == 0) throw Error("pretrain_encoder: empty graph");
  if (feats.cols() != cfg.in_dim) throw Error("pretrain_encoder: feature dimension does not match in_dim");

  PretrainResult result;
  Adam<EncoderWeights> opt(params.weights);
  std::vector<NodeId> order(g.num_nodes());
  std::iota(order.begin(), order.end(), NodeId{0});
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t items = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::size_t end = std::min(order.size(), start + bs);
      std::span<const NodeId> batch(order.data() + start, end - start);
      auto plan = plan_batch(g, batch, cfg, rng);
      auto obj = batch_objective(params.weights, plan, feats, cfg.tau, 1.0, cfg.lambda);
      if (!std::isfinite(obj.total) || !all_finite(obj.grad))
        throw Error("pretrain_encoder: non-finite loss at epoch " + std::to_string(epoch) + " (L_ns=" +
                    std::to_string(obj.loss_ns) + ", L_ss=" + std::to_string(obj.loss_ss) + ")");
      opt.step(params.weights, obj.grad, cfg.lr);
      loss_sum += obj.total;
      items += batch.size();
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(items));
  }
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* kEncoderMagic = "PPSLENC";

inline void save_encoder(const std::string& path, const EncoderParams& p) {
  const auto& c = p.config;
  Metadata meta{{"in_dim", c.in_dim}, {"hidden", c.hidden}, {"dim", c.dim},
                {"tau", c.tau},       {"rho", c.rho},       {"lambda", c.lambda},
                {"k", c.k},           {"seed", static_cast<double>(c.seed)}};
  save_checkpoint(path, kEncoderMagic, meta, p.weights);
}

inline EncoderParams load_encoder(const std::string& path, EncoderConfig base = {}) {
  auto meta = read_checkpoint_metadata(path, kEncoderMagic);
  base.in_dim = static_cast<int>(meta.at("in_dim"));
  base.hidden = static_cast<int>(meta.at("hidden"));
  base.dim = static_cast<int>(meta.at("dim"));
  base.tau = meta.at("tau");
  base.rho = meta.at("rho");
  base.lambda = meta.at("lambda");
  base.k = static_cast<int>(meta.at("k"));
  base.seed = static_cast<std::uint64_t>(meta.at("seed"));
  EncoderParams p;
  p.config = base;
  p.weights.conv1 = Dense(base.in_dim, base.hidden);
  p.weights.conv2 = Dense(base.hidden, base.dim);
  load_checkpoint(path, kEncoderMagic, p.weights);
  return p;
}

}  // namespace ppsl
