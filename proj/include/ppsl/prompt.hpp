#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "ppsl/encoder.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/nn.hpp"

namespace ppsl {

struct PromptConfig {
  int epochs = 30;
  double lr = 1e-3;
  int k = 3;
  std::size_t m = 20;
  double alpha = 0.2;
  int hidden = 128;
  bool all_centers = false;  // every center of every prompt community, each epoch
  std::uint64_t seed = 0;
  std::size_t ego_cap = 2000;

  void validate() const {
    if (!(alpha >= 0 && alpha <= 1)) throw Error("prompt: alpha must be in [0, 1]");
    if (epochs < 0 || k < 0 || hidden <= 0 || m == 0 || !(lr >= 0)) throw Error("prompt: invalid settings");
  }
};

inline constexpr double kLogitClamp = 30.0;

/// Pairwise membership scorer: logit = MLP(z(u) || z(center)).
struct PromptWeights {
  Dense layer1;  // 2d -> hidden
  Dense layer2;  // hidden -> 1

  template <class F>
  void for_each_block(F&& f) {
    f("layer1.weight", layer1.weight);
    f("layer1.bias", layer1.bias);
    f("layer2.weight", layer2.weight);
    f("layer2.bias", layer2.bias);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f("layer1.weight", layer1.weight);
    f("layer1.bias", layer1.bias);
    f("layer2.weight", layer2.weight);
    f("layer2.bias", layer2.bias);
  }
};

struct PromptParams {
  PromptWeights weights;
  double alpha = 0.2;
  int k = 3;
  std::size_t ego_cap = 2000;
};

inline PromptParams init_prompt(int embedding_dim, const PromptConfig& cfg, Rng& rng) {
  cfg.validate();
  PromptParams p;
  p.alpha = cfg.alpha;
  p.k = cfg.k;
  p.ego_cap = cfg.ego_cap;
  p.weights.layer1 = Dense(2 * embedding_dim, cfg.hidden);
  p.weights.layer2 = Dense(cfg.hidden, 1);
  glorot(p.weights.layer1.weight, rng);
  glorot(p.weights.layer2.weight, rng);
  return p;
}

struct PromptSample {
  NodeId center = 0;
  NodeId candidate = 0;
  double label = 0;  // 1 iff candidate is in the center's community
};

/// Samples for one center: every other node of its k-ego, labelled by
/// membership in `community`.
inline void append_center_samples(const Graph& g, const Community& community, NodeId center, int k, std::size_t cap,
                                  std::vector<PromptSample>& out) {
  for (NodeId u : k_ego_nodes(g, std::span<const NodeId>(&center, 1), k, cap))
    if (u != center) out.push_back({center, u, community.contains(u) ? 1.0 : 0.0});
}

/// One epoch's training draw: a random center in each prompt community, or
/// (with all_centers) every center of every prompt community.
inline std::vector<PromptSample> build_prompt_samples(const CommunitySet& prompts, const Graph& g, int k,
                                                      std::size_t cap, bool all_centers, Rng& rng) {
  if (prompts.size() == 0) throw Error("build_prompt_samples: no prompt communities");
  std::vector<PromptSample> out;
  for (const auto& c : prompts.communities) {
    if (all_centers) {
      for (NodeId w : c.members()) append_center_samples(g, c, w, k, cap, out);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
    append_center_samples(g, c, c.members()[pick(rng)], k, cap, out);
  }
  return out;
}

inline Matrix pair_inputs(const EmbeddingTable& table, std::span<const PromptSample> samples) {
  const Eigen::Index d = table.cols();
  Matrix x(static_cast<Eigen::Index>(samples.size()), 2 * d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    x.row(r).head(d) = table.row(samples[i].candidate);
    x.row(r).tail(d) = table.row(samples[i].center);
  }
  return x;
}

/// Clamped logits for a batch of pair inputs.
inline Vector prompt_logits(const PromptWeights& w, const Matrix& x) {
  Matrix h = relu(w.layer1.forward(x));
  Vector l = w.layer2.forward(h).col(0);
  return l.cwiseMax(-kLogitClamp).cwiseMin(kLogitClamp);
}

struct PromptLoss {
  double value = 0;
  PromptWeights grad;
};

namespace detail {

/// Distinct ids of `ids` in ascending order, and each entry's slot in that list.
inline std::pair<std::vector<NodeId>, std::vector<Eigen::Index>> compact(const std::vector<NodeId>& ids) {
  std::vector<NodeId> uniq(ids);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<Eigen::Index> slot(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    slot[i] = std::lower_bound(uniq.begin(), uniq.end(), ids[i]) - uniq.begin();
  return {std::move(uniq), std::move(slot)};
}

}  // namespace detail

/// Summed binary cross-entropy of sigmoid(logit) against the labels.
/// The first layer is split into candidate and center halves so each distinct
/// node is projected once.
inline PromptLoss prompt_loss(const PromptParams& pp, std::span<const PromptSample> samples,
                              const EmbeddingTable& table) {
  if (samples.empty()) throw Error("prompt_loss: no samples");
  const auto& w = pp.weights;
  const Eigen::Index d = table.cols();
  const auto n = static_cast<Eigen::Index>(samples.size());
  std::vector<NodeId> us, ws;
  for (const auto& s : samples) {
    us.push_back(s.candidate);
    ws.push_back(s.center);
  }
  auto [uniq_u, slot_u] = detail::compact(us);
  auto [uniq_w, slot_w] = detail::compact(ws);
  Matrix zu = gather_rows(table, uniq_u);
  Matrix zw = gather_rows(table, uniq_w);
  Matrix pu = zu * w.layer1.weight.topRows(d);
  Matrix pw = zw * w.layer1.weight.bottomRows(d);

  Matrix pre(n, w.layer1.weight.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    pre.row(i) = pu.row(slot_u[static_cast<std::size_t>(i)]) + pw.row(slot_w[static_cast<std::size_t>(i)]) +
                 w.layer1.bias;
  Matrix h = relu(pre);
  Vector raw = w.layer2.forward(h).col(0);

  PromptLoss out;
  Vector dl(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    double y = samples[static_cast<std::size_t>(i)].label;
    double l = std::clamp(raw(i), -kLogitClamp, kLogitClamp);
    out.value += softplus(l) - y * l;
    bool clamped = raw(i) < -kLogitClamp || raw(i) > kLogitClamp;
    dl(i) = clamped ? 0.0 : sigmoid(l) - y;
  }
  out.grad = zeros_like(w);
  out.grad.layer2.weight = h.transpose() * dl;
  out.grad.layer2.bias(0, 0) = dl.sum();
  Matrix dpre = relu_backward(dl * w.layer2.weight.transpose(), pre);
  Matrix du = Matrix::Zero(zu.rows(), dpre.cols());
  Matrix dw = Matrix::Zero(zw.rows(), dpre.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    du.row(slot_u[static_cast<std::size_t>(i)]) += dpre.row(i);
    dw.row(slot_w[static_cast<std::size_t>(i)]) += dpre.row(i);
  }
  out.grad.layer1.weight.topRows(d) = zu.transpose() * du;
  out.grad.layer1.weight.bottomRows(d) = zw.transpose() * dw;
  out.grad.layer1.bias = dpre.colwise().sum();
  return out;
}

struct PromptTraining {
  PromptParams params;
  std::vector<double> loss;  // per epoch, mean per-sample loss
};

/// Fits the prompt function on the retrieved communities: per epoch one
/// sample draw and one Adam step.
inline PromptTraining train_prompt(const CommunitySet& prompts, const Graph& g, const EmbeddingTable& table,
                                   const PromptConfig& cfg, Rng& rng) {
  cfg.validate();
  if (prompts.size() == 0) throw Error("train_prompt: no prompt communities");
  PromptTraining out;
  out.params = init_prompt(static_cast<int>(table.cols()), cfg, rng);
  Adam<PromptWeights> opt(out.params.weights);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto samples = build_prompt_samples(prompts, g, cfg.k, cfg.ego_cap, cfg.all_centers, rng);
    if (samples.empty()) {
      out.loss.push_back(0.0);
      continue;
    }
    auto loss = prompt_loss(out.params, samples, table);
    if (!std::isfinite(loss.value)) throw Error("train_prompt: non-finite loss");
    opt.step(out.params.weights, loss.grad, cfg.lr);
    out.loss.push_back(loss.value / static_cast<double>(samples.size()));
  }
  return out;
}

/// Members of the k-ego of `initial` scored at least alpha against the query,
/// plus the query itself. Query first, then ascending id.
inline Community predict_community(const PromptParams& pp, const EmbeddingTable& table, const Graph& g, NodeId query,
                                   const Community& initial) {
  if (!initial.contains(query)) throw Error("predict_community: initial community does not contain the query");
  auto candidates = k_ego_nodes(g, initial.members(), pp.k, pp.ego_cap);
  std::vector<PromptSample> pairs;
  for (NodeId u : candidates)
    if (u != query) pairs.push_back({query, u, 0.0});
  std::vector<NodeId> members{query};
  if (!pairs.empty()) {
    Vector logits = prompt_logits(pp.weights, pair_inputs(table, pairs));
    std::vector<NodeId> kept;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (sigmoid(logits(static_cast<Eigen::Index>(i))) >= pp.alpha) kept.push_back(pairs[i].candidate);
    std::sort(kept.begin(), kept.end());
    members.insert(members.end(), kept.begin(), kept.end());
  }
  return Community(std::move(members));
}

inline constexpr const char* kPromptMagic = "PPSLPRM";

inline void save_prompt(const std::string& path, const PromptParams& p) {
  Metadata meta{{"in_dim", static_cast<double>(p.weights.layer1.weight.rows())},
                {"hidden", static_cast<double>(p.weights.layer1.weight.cols())},
                {"alpha", p.alpha},
                {"k", p.k},
                {"ego_cap", static_cast<double>(p.ego_cap)}};
  save_checkpoint(path, kPromptMagic, meta, p.weights);
}

inline PromptParams load_prompt(const std::string& path) {
  auto meta = read_checkpoint_metadata(path, kPromptMagic);
  PromptParams p;
  p.alpha = meta.at("alpha");
  p.k = static_cast<int>(meta.at("k"));
  p.ego_cap = static_cast<std::size_t>(meta.at("ego_cap"));
  auto in = static_cast<Eigen::Index>(meta.at("in_dim"));
  auto hidden = static_cast<Eigen::Index>(meta.at("hidden"));
  p.weights.layer1 = Dense(in, hidden);
  p.weights.layer2 = Dense(hidden, 1);
  load_checkpoint(path, kPromptMagic, p.weights);
  return p;
}

}  // namespace ppsl
