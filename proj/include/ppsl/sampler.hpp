#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Sparse>

#include "ppsl/checkpoint.hpp"
#include "ppsl/encoder.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/metrics.hpp"
#include "ppsl/nn.hpp"

namespace ppsl {

struct AgentConfig {
  int dim = 64;
  int gpn_layers = 3;
  int mlp_layers = 3;
  int batch = 32;
  int epochs = 100;
  double lr = 1e-2;
  double gamma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim <= 0 || gpn_layers < 1 || mlp_layers < 1) throw Error("agent: invalid architecture");
    if (batch <= 0 || epochs < 0 || !(lr >= 0)) throw Error("agent: invalid training settings");
    if (!(gamma > 0 && gamma <= 1)) throw Error("agent: gamma must be in (0, 1]");
  }
};

struct GpnLayer {
  Matrix w_self;  // dim x dim
  Matrix w_nbr;   // dim x dim
  Matrix bias;    // 1 x dim
};

/// Expansion policy: embedding projection, node-type vectors q1/q2, message
/// passing over the state subgraph, a per-node scoring head and a STOP head
/// reading the mean community representation.
struct AgentWeights {
  Matrix proj;  // in_dim x dim
  Matrix q1;    // 1 x dim
  Matrix q2;    // 1 x dim
  std::vector<GpnLayer> gpn;
  std::vector<Dense> head;  // dim -> ... -> 1
  Dense stop;               // dim -> 1

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("proj", self.proj);
    f("q1", self.q1);
    f("q2", self.q2);
    for (std::size_t l = 0; l < self.gpn.size(); ++l) {
      std::string p = "gpn" + std::to_string(l);
      f(p + ".w_self", self.gpn[l].w_self);
      f(p + ".w_nbr", self.gpn[l].w_nbr);
      f(p + ".bias", self.gpn[l].bias);
    }
    for (std::size_t l = 0; l < self.head.size(); ++l) {
      std::string p = "head" + std::to_string(l);
      f(p + ".weight", self.head[l].weight);
      f(p + ".bias", self.head[l].bias);
    }
    f("stop.weight", self.stop.weight);
    f("stop.bias", self.stop.bias);
  }
  template <class F>
  void for_each_block(F&& f) {
    visit(*this, [&](const std::string& n, Matrix& m) { f(std::string_view(n), m); });
  }
  template <class F>
  void for_each_block(F&& f) const {
    visit(*this, [&](const std::string& n, const Matrix& m) { f(std::string_view(n), m); });
  }

  int input_dim() const { return static_cast<int>(proj.rows()); }
};

/// Zero-filled weights of the right shapes.
inline AgentWeights agent_shape(int in_dim, const AgentConfig& cfg) {
  AgentWeights w;
  w.proj = Matrix::Zero(in_dim, cfg.dim);
  w.q1 = Matrix::Zero(1, cfg.dim);
  w.q2 = Matrix::Zero(1, cfg.dim);
  for (int l = 0; l < cfg.gpn_layers; ++l)
    w.gpn.push_back({Matrix::Zero(cfg.dim, cfg.dim), Matrix::Zero(cfg.dim, cfg.dim), Matrix::Zero(1, cfg.dim)});
  for (int l = 0; l < cfg.mlp_layers; ++l) w.head.emplace_back(cfg.dim, l + 1 == cfg.mlp_layers ? 1 : cfg.dim);
  w.stop = Dense(cfg.dim, 1);
  return w;
}

inline AgentWeights init_agent(int in_dim, const AgentConfig& cfg) {
  cfg.validate();
  auto w = agent_shape(in_dim, cfg);
  Rng rng(cfg.seed);
  glorot(w.proj, rng);
  glorot(w.q1, rng);
  glorot(w.q2, rng);
  for (auto& l : w.gpn) {
    glorot(l.w_self, rng);
    glorot(l.w_nbr, rng);
  }
  for (auto& d : w.head) glorot(d.weight, rng);
  glorot(w.stop.weight, rng);
  return w;
}

// ---------------------------------------------------------------------------
// Expansion state

inline constexpr NodeId kStop = std::numeric_limits<NodeId>::max();

/// Community grown one node at a time plus its exact frontier.
class ExpansionState {
 public:
  ExpansionState(const Graph& g, NodeId seed) : g_(&g) {
    if (!g.valid(seed)) throw Error("expansion: invalid seed " + std::to_string(seed));
    community_.push_back(seed);
    members_.insert(seed);
    for (NodeId u : g.neighbors(seed)) ++frontier_[u];
  }

  const std::vector<NodeId>& community() const { return community_; }
  bool in_community(NodeId v) const { return members_.count(v) != 0; }
  std::size_t frontier_size() const { return frontier_.size(); }

  /// Frontier nodes in ascending id order.
  std::vector<NodeId> frontier() const {
    std::vector<NodeId> out;
    out.reserve(frontier_.size());
    for (const auto& [v, _] : frontier_) out.push_back(v);
    return out;
  }

  void add(NodeId u) {
    auto it = frontier_.find(u);
    if (it == frontier_.end()) throw Error("expansion: node " + std::to_string(u) + " is not in the frontier");
    frontier_.erase(it);
    community_.push_back(u);
    members_.insert(u);
    for (NodeId w : g_->neighbors(u))
      if (!members_.count(w)) ++frontier_[w];
  }

 private:
  const Graph* g_;
  std::vector<NodeId> community_;
  std::unordered_set<NodeId> members_;
  std::map<NodeId, int> frontier_;  // node -> community neighbors
};

/// Induced state subgraph: community rows first (insertion order), then the
/// frontier in ascending id order.
struct StateGraph {
  std::vector<NodeId> nodes;
  std::size_t n_community = 0;
  std::size_t query_row = 0;
  SparseMatrix mean_agg;  // row i averages the neighbors of node i

  std::size_t n_frontier() const { return nodes.size() - n_community; }
};

inline StateGraph state_graph(const Graph& g, const ExpansionState& s, NodeId query) {
  StateGraph sg;
  sg.nodes = s.community();
  sg.n_community = sg.nodes.size();
  auto f = s.frontier();
  sg.nodes.insert(sg.nodes.end(), f.begin(), f.end());
  std::unordered_map<NodeId, std::uint32_t> local;
  local.reserve(sg.nodes.size() * 2);
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) local.emplace(sg.nodes[i], static_cast<std::uint32_t>(i));
  auto qit = local.find(query);
  if (qit == local.end()) throw Error("policy: query node is not in the state");
  sg.query_row = qit->second;

  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
    std::vector<std::uint32_t> nb;
    for (NodeId u : g.neighbors(sg.nodes[i])) {
      auto it = local.find(u);
      if (it != local.end()) nb.push_back(it->second);
    }
    for (auto j : nb) t.emplace_back(i, j, 1.0 / static_cast<double>(nb.size()));
  }
  const auto n = static_cast<Eigen::Index>(sg.nodes.size());
  sg.mean_agg.resize(n, n);
  sg.mean_agg.setFromTriplets(t.begin(), t.end());
  return sg;
}

struct InitialFeatures {
  Matrix x;                 // rows follow StateGraph::nodes
  double g = 0;             // max of the projected query embedding
  Eigen::Index g_arg = 0;   // position of that max
  RowVector query_embedding;
};

/// x(u) = g(u) q1 + [u in community] q2, where g is nonzero only for the query.
inline InitialFeatures init_node_features(const AgentWeights& w, const StateGraph& sg, NodeId query,
                                          const EmbeddingTable& table) {
  if (table.cols() != w.proj.rows()) throw Error("policy: embedding dimension does not match agent input");
  InitialFeatures out;
  out.x = Matrix::Zero(static_cast<Eigen::Index>(sg.nodes.size()), w.q1.cols());
  out.query_embedding = table.row(query);
  RowVector projected = out.query_embedding * w.proj;
  out.g = projected.maxCoeff(&out.g_arg);
  out.x.row(static_cast<Eigen::Index>(sg.query_row)) += out.g * w.q1.row(0);
  for (std::size_t i = 0; i < sg.n_community; ++i) out.x.row(static_cast<Eigen::Index>(i)) += w.q2.row(0);
  return out;
}

/// Forward pass over one state, with everything the backward pass needs.
struct PolicyForward {
  StateGraph sg;
  InitialFeatures init;
  std::vector<Matrix> h;    // h[0] = x, h[l+1] = relu(pre[l])
  std::vector<Matrix> agg;  // mean-aggregated h[l]
  std::vector<Matrix> pre;
  std::vector<Matrix> head_in;
  std::vector<Matrix> head_pre;
  RowVector stop_in;
  Vector logits;  // frontier nodes, then STOP
  Vector probs;

  std::size_t stop_index() const { return static_cast<std::size_t>(logits.size()) - 1; }
  NodeId action_node(std::size_t i) const { return i == stop_index() ? kStop : sg.nodes[sg.n_community + i]; }
  std::size_t action_index(NodeId a) const {
    if (a == kStop) return stop_index();
    auto it = std::find(sg.nodes.begin() + static_cast<std::ptrdiff_t>(sg.n_community), sg.nodes.end(), a);
    if (it == sg.nodes.end()) throw Error("policy: action " + std::to_string(a) + " is not in the frontier");
    return static_cast<std::size_t>(it - sg.nodes.begin()) - sg.n_community;
  }
};

inline PolicyForward policy_forward(const AgentWeights& w, const Graph& g, const ExpansionState& s, NodeId query,
                                    const EmbeddingTable& table) {
  PolicyForward f;
  f.sg = state_graph(g, s, query);
  f.init = init_node_features(w, f.sg, query, table);
  f.h.push_back(f.init.x);
  for (const auto& layer : w.gpn) {
    f.agg.push_back(f.sg.mean_agg * f.h.back());
    Matrix p = f.h.back() * layer.w_self + f.agg.back() * layer.w_nbr;
    p.rowwise() += layer.bias.row(0);
    f.h.push_back(relu(p));
    f.pre.push_back(std::move(p));
  }
  const Matrix& top = f.h.back();
  const auto nc = static_cast<Eigen::Index>(f.sg.n_community);
  const auto nf = static_cast<Eigen::Index>(f.sg.n_frontier());

  Matrix a = top.bottomRows(nf);
  for (std::size_t l = 0; l < w.head.size(); ++l) {
    f.head_in.push_back(a);
    Matrix p = w.head[l].forward(a);
    a = (l + 1 == w.head.size()) ? p : relu(p);
    f.head_pre.push_back(std::move(p));
  }
  f.stop_in = top.topRows(nc).colwise().mean();
  double stop_logit = (f.stop_in * w.stop.weight)(0, 0) + w.stop.bias(0, 0);

  f.logits.resize(nf + 1);
  if (nf > 0) f.logits.head(nf) = a.col(0);
  f.logits(nf) = stop_logit;
  if (!f.logits.allFinite()) throw Error("policy: non-finite logits");
  f.probs = softmax(f.logits);
  return f;
}

/// Accumulates into `grad` the gradient of sum_i dlogits(i) * logits(i).
inline void policy_backward(const AgentWeights& w, const PolicyForward& f, const Vector& dlogits, AgentWeights& grad) {
  const auto nc = static_cast<Eigen::Index>(f.sg.n_community);
  const auto nf = static_cast<Eigen::Index>(f.sg.n_frontier());
  const auto n = nc + nf;
  const Eigen::Index dim = w.q1.cols();
  Matrix dh = Matrix::Zero(n, dim);

  if (nf > 0) {
    Matrix d = dlogits.head(nf);
    for (std::size_t l = w.head.size(); l-- > 0;) {
      grad.head[l].weight.noalias() += f.head_in[l].transpose() * d;
      grad.head[l].bias += d.colwise().sum();
      Matrix din = d * w.head[l].weight.transpose();
      d = l > 0 ? relu_backward(din, f.head_pre[l - 1]) : din;
    }
    dh.bottomRows(nf) += d;
  }
  double dstop = dlogits(nf);
  grad.stop.weight += dstop * f.stop_in.transpose();
  grad.stop.bias(0, 0) += dstop;
  dh.topRows(nc).rowwise() += (dstop / static_cast<double>(nc)) * w.stop.weight.col(0).transpose();

  for (std::size_t l = w.gpn.size(); l-- > 0;) {
    Matrix dpre = relu_backward(dh, f.pre[l]);
    grad.gpn[l].w_self.noalias() += f.h[l].transpose() * dpre;
    grad.gpn[l].w_nbr.noalias() += f.agg[l].transpose() * dpre;
    grad.gpn[l].bias += dpre.colwise().sum();
    dh = dpre * w.gpn[l].w_self.transpose();
    dh.noalias() += f.sg.mean_agg.transpose() * (dpre * w.gpn[l].w_nbr.transpose());
  }

  const auto q = static_cast<Eigen::Index>(f.sg.query_row);
  grad.q1.row(0) += f.init.g * dh.row(q);
  grad.q2.row(0) += dh.topRows(nc).colwise().sum();
  double dg = dh.row(q).dot(w.q1.row(0));
  grad.proj.col(f.init.g_arg) += dg * f.init.query_embedding.transpose();
}

/// Probabilities over the frontier (ascending id) followed by STOP.
inline Vector policy_distribution(const AgentWeights& w, const Graph& g, const ExpansionState& s, NodeId query,
                                  const EmbeddingTable& table) {
  return policy_forward(w, g, s, query, table).probs;
}

// ---------------------------------------------------------------------------
// Rewards

/// Change in F-score caused by one expansion step; zero for STOP.
inline double step_reward(std::span<const NodeId> current, std::span<const NodeId> previous,
                          std::span<const NodeId> truth) {
  if (truth.empty()) throw Error("step_reward: empty ground truth");
  if (current.size() == previous.size()) return 0.0;
  return fscore(current, truth) - fscore(previous, truth);
}

/// G_t = sum_k gamma^k r_{t+k}.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (!(gamma > 0 && gamma <= 1)) throw Error("returns: gamma must be in (0, 1]");
  std::vector<double> g(rewards.size());
  double acc = 0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Trajectories and policy gradient

struct Trajectory {
  NodeId seed = 0;
  std::vector<NodeId> actions;  // kStop marks a STOP action
  std::vector<double> rewards;
  std::vector<double> returns;
  std::vector<double> log_probs;
};

/// A trajectory together with the forward passes of its states, computed
/// with the weights the actions were drawn from.
struct Rollout {
  Trajectory trajectory;
  std::vector<PolicyForward> steps;
};

/// Samples one expansion from `seed`, stopping when the community reaches the
/// size of `truth`, when STOP is drawn, or when the frontier is empty.
inline Rollout sample_rollout(const AgentWeights& w, const Graph& g, const EmbeddingTable& table, NodeId seed,
                              const Community& truth, double gamma, Rng& rng) {
  Rollout r;
  r.trajectory.seed = seed;
  ExpansionState state(g, seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  while (state.community().size() < truth.size() && state.frontier_size() > 0) {
    auto f = policy_forward(w, g, state, seed, table);
    double u = coin(rng), acc = 0;
    std::size_t choice = f.stop_index();
    for (Eigen::Index i = 0; i < f.probs.size(); ++i) {
      acc += f.probs(i);
      if (u < acc) {
        choice = static_cast<std::size_t>(i);
        break;
      }
    }
    NodeId a = f.action_node(choice);
    r.trajectory.actions.push_back(a);
    r.trajectory.log_probs.push_back(std::log(f.probs(static_cast<Eigen::Index>(choice))));
    r.steps.push_back(std::move(f));
    if (a == kStop) {
      r.trajectory.rewards.push_back(0.0);
      break;
    }
    std::vector<NodeId> prev = state.community();
    state.add(a);
    r.trajectory.rewards.push_back(step_reward(state.community(), prev, truth.sorted()));
  }
  r.trajectory.returns = discounted_returns(r.trajectory.rewards, gamma);
  return r;
}

/// Recomputes the forward passes (and log-probabilities) of a recorded
/// trajectory under `w`.
inline Rollout replay(const AgentWeights& w, const Graph& g, const EmbeddingTable& table, const Trajectory& traj) {
  Rollout r;
  r.trajectory = traj;
  r.trajectory.log_probs.clear();
  ExpansionState state(g, traj.seed);
  for (NodeId a : traj.actions) {
    auto f = policy_forward(w, g, state, traj.seed, table);
    r.trajectory.log_probs.push_back(std::log(f.probs(static_cast<Eigen::Index>(f.action_index(a)))));
    r.steps.push_back(std::move(f));
    if (a == kStop) break;
    state.add(a);
  }
  return r;
}

struct PolicyGradient {
  double objective = 0;  // (1/B) sum_traj sum_t G_t log pi(a_t | S_{t-1})
  AgentWeights grad;
};

inline PolicyGradient policy_gradient(const AgentWeights& w, std::span<const Rollout> rollouts) {
  if (rollouts.empty()) throw Error("policy_update: no trajectories");
  PolicyGradient out;
  out.grad = zeros_like(w);
  const double scale = 1.0 / static_cast<double>(rollouts.size());
  for (const auto& r : rollouts) {
    const auto& tr = r.trajectory;
    for (std::size_t t = 0; t < r.steps.size(); ++t) {
      const auto& f = r.steps[t];
      double gt = tr.returns[t];
      auto a = static_cast<Eigen::Index>(f.action_index(tr.actions[t]));
      out.objective += scale * gt * std::log(f.probs(a));
      if (gt == 0.0) continue;
      Vector d = -f.probs;
      d(a) += 1.0;
      policy_backward(w, f, (scale * gt) * d, out.grad);
    }
  }
  return out;
}

/// One gradient-ascent step on the batch-averaged REINFORCE objective.
inline double policy_update(AgentWeights& w, std::span<const Rollout> rollouts, double lr) {
  auto pg = policy_gradient(w, rollouts);
  if (!all_finite(pg.grad)) throw Error("policy_update: non-finite gradient");
  add_scaled(w, lr, pg.grad);
  return pg.objective;
}

// ---------------------------------------------------------------------------
// Teacher forcing

/// A ground-truth expansion: from `seed`, add `additions` in order; every
/// addition was a uniformly drawn correct frontier node. When the community
/// is complete and the frontier is still nonempty the path ends with STOP.
struct TeacherPath {
  NodeId seed = 0;
  std::vector<NodeId> additions;
  bool ends_with_stop = false;
  bool disconnected = false;  // truth not reachable from the seed inside itself
};

inline std::vector<NodeId> correct_frontier(const ExpansionState& s, const Community& truth) {
  std::vector<NodeId> out;
  for (NodeId v : s.frontier())
    if (truth.contains(v)) out.push_back(v);
  return out;
}

inline TeacherPath plan_teacher_path(const Graph& g, const Community& truth, NodeId seed, Rng& rng) {
  TeacherPath p;
  p.seed = seed;
  ExpansionState s(g, seed);
  while (true) {
    auto correct = correct_frontier(s, truth);
    if (correct.empty()) {
      if (s.community().size() >= truth.size())
        p.ends_with_stop = s.frontier_size() > 0;
      else
        p.disconnected = true;
      break;
    }
    std::uniform_int_distribution<std::size_t> pick(0, correct.size() - 1);
    NodeId next = correct[pick(rng)];
    p.additions.push_back(next);
    s.add(next);
  }
  return p;
}

struct TeacherObjective {
  double nll = 0;  // summed cross-entropy against the uniform correct-node target
  std::size_t steps = 0;
  AgentWeights grad;
};

inline TeacherObjective teacher_forcing_objective(const AgentWeights& w, const Graph& g, const EmbeddingTable& table,
                                                  const Community& truth, const TeacherPath& path) {
  TeacherObjective out;
  out.grad = zeros_like(w);
  ExpansionState s(g, path.seed);
  auto visit = [&](const std::vector<std::size_t>& targets, const PolicyForward& f) {
    Vector target = Vector::Zero(f.probs.size());
    for (auto i : targets) target(static_cast<Eigen::Index>(i)) = 1.0 / static_cast<double>(targets.size());
    for (Eigen::Index i = 0; i < target.size(); ++i)
      if (target(i) > 0) out.nll -= target(i) * std::log(f.probs(i));
    policy_backward(w, f, f.probs - target, out.grad);
    ++out.steps;
  };
  for (NodeId next : path.additions) {
    auto f = policy_forward(w, g, s, path.seed, table);
    std::vector<std::size_t> targets;
    for (NodeId v : correct_frontier(s, truth)) targets.push_back(f.action_index(v));
    visit(targets, f);
    s.add(next);
  }
  if (path.ends_with_stop) {
    auto f = policy_forward(w, g, s, path.seed, table);
    visit({f.stop_index()}, f);
  }
  return out;
}

struct TeacherReport {
  double nll = 0;
  std::size_t steps = 0;
  bool disconnected = false;
};

/// Draws a seed in `truth`, follows a ground-truth expansion and takes one
/// descent step on the summed negative log-likelihood.
inline TeacherReport teacher_forcing_update(AgentWeights& w, const Community& truth, const Graph& g,
                                            const EmbeddingTable& table, double lr, Rng& rng) {
  if (truth.size() < 2) throw Error("teacher forcing: community needs at least 2 nodes");
  std::uniform_int_distribution<std::size_t> pick(0, truth.size() - 1);
  NodeId seed = truth.members()[pick(rng)];
  auto path = plan_teacher_path(g, truth, seed, rng);
  auto obj = teacher_forcing_objective(w, g, table, truth, path);
  if (!all_finite(obj.grad)) throw Error("teacher forcing: non-finite gradient");
  if (obj.steps > 0) add_scaled(w, -lr, obj.grad);
  return {obj.nll, obj.steps, path.disconnected};
}

// ---------------------------------------------------------------------------
// Training loop

struct AgentHistory {
  std::vector<double> mean_return;   // per epoch, mean G_1 over rollouts
  std::vector<double> teacher_nll;   // per epoch, mean teacher-forcing loss per community
  std::size_t disconnected = 0;      // teacher paths cut short
};

inline AgentHistory train_agent(AgentWeights& w, const Graph& g, const CommunitySet& known,
                                const EmbeddingTable& table, const AgentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (known.size() == 0) throw Error("train_agent: no known communities");
  AgentHistory hist;
  std::vector<std::size_t> order(known.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double ret_sum = 0, nll_sum = 0;
    std::size_t n_roll = 0, n_tf = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::size_t end = std::min(order.size(), start + bs);
      std::vector<Rollout> batch;
      for (std::size_t i = start; i < end; ++i) {
        const auto& c = known[order[i]];
        if (c.size() < 2) continue;
        std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
        NodeId seed = c.members()[pick(rng)];
        batch.push_back(sample_rollout(w, g, table, seed, c, cfg.gamma, rng));
        const auto& ret = batch.back().trajectory.returns;
        ret_sum += ret.empty() ? 0.0 : ret.front();
        ++n_roll;
      }
      if (!batch.empty()) policy_update(w, batch, cfg.lr);
      for (std::size_t i = start; i < end; ++i) {
        const auto& c = known[order[i]];
        if (c.size() < 2) continue;
        auto rep = teacher_forcing_update(w, c, g, table, cfg.lr, rng);
        nll_sum += rep.nll;
        hist.disconnected += rep.disconnected ? 1 : 0;
        ++n_tf;
      }
    }
    hist.mean_return.push_back(n_roll ? ret_sum / static_cast<double>(n_roll) : 0.0);
    hist.teacher_nll.push_back(n_tf ? nll_sum / static_cast<double>(n_tf) : 0.0);
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Inference

/// Greedy expansion from the query. Halts when STOP has the highest
/// probability, the frontier is empty, or the community exceeds `size_cap`.
inline Community generate_initial_community(const AgentWeights& w, const Graph& g, NodeId query,
                                            const EmbeddingTable& table, std::size_t size_cap) {
  ExpansionState s(g, query);
  while (s.community().size() <= size_cap && s.frontier_size() > 0) {
    auto f = policy_forward(w, g, s, query, table);
    Eigen::Index best = 0;
    f.logits.maxCoeff(&best);
    NodeId a = f.action_node(static_cast<std::size_t>(best));
    if (a == kStop) break;
    s.add(a);
  }
  return Community(s.community());
}

/// Indices of the m known communities closest to `initial` by Euclidean
/// distance between sum-pooled embeddings; ties broken by index.
inline std::vector<std::size_t> retrieve_similar(const EmbeddingTable& table, const Community& initial,
                                                 const CommunitySet& known, std::size_t m) {
  if (m > known.size())
    throw Error("retrieve_similar: m=" + std::to_string(m) + " exceeds " + std::to_string(known.size()) +
                " known communities");
  RowVector zq = embed_community(table, initial.members());
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(known.size());
  for (std::size_t i = 0; i < known.size(); ++i)
    dist.emplace_back((embed_community(table, known[i].members()) - zq).norm(), i);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m), dist.end());
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(dist[i].second);
  return out;
}

inline CommunitySet select(const CommunitySet& cs, std::span<const std::size_t> indices) {
  CommunitySet out;
  out.role = cs.role;
  for (auto i : indices) out.communities.push_back(cs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* kAgentMagic = "PPSLAGT";

inline void save_agent(const std::string& path, const AgentWeights& w, const AgentConfig& cfg) {
  Metadata meta{{"in_dim", w.input_dim()},     {"dim", cfg.dim},     {"gpn_layers", cfg.gpn_layers},
                {"mlp_layers", cfg.mlp_layers}, {"gamma", cfg.gamma}, {"seed", static_cast<double>(cfg.seed)}};
  save_checkpoint(path, kAgentMagic, meta, w);
}

inline AgentWeights load_agent(const std::string& path, AgentConfig cfg = {}) {
  auto meta = read_checkpoint_metadata(path, kAgentMagic);
  cfg.dim = static_cast<int>(meta.at("dim"));
  cfg.gpn_layers = static_cast<int>(meta.at("gpn_layers"));
  cfg.mlp_layers = static_cast<int>(meta.at("mlp_layers"));
  auto w = agent_shape(static_cast<int>(meta.at("in_dim")), cfg);
  load_checkpoint(path, kAgentMagic, w);
  return w;
}

}  // namespace ppsl
