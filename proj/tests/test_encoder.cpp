#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "ppsl/checkpoint.hpp"
#include "ppsl/encoder.hpp"
#include "ppsl/eval.hpp"
#include "support.hpp"

using namespace ppsl;
namespace t = ppsl::testing;

namespace {

struct MatrixPair {
  Matrix a, b;
  template <class F>
  void for_each_block(F&& f) {
    f("a", a);
    f("b", b);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f("a", a);
    f("b", b);
  }
};

EncoderConfig small_config(std::uint64_t seed = 14) {
  EncoderConfig c;
  c.hidden = 8;
  c.dim = 4;
  c.k = 1;
  c.seed = seed;
  return c;
}

/// Cliques of sizes first, first+1, ... joined by nothing.
std::pair<Graph, CommunitySet> graded_cliques(std::size_t count, std::size_t first) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  CommunitySet cs;
  NodeId next = 0;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<NodeId> m;
    for (std::size_t i = 0; i < first + c; ++i) m.push_back(next++);
    for (std::size_t i = 0; i < m.size(); ++i)
      for (std::size_t j = i + 1; j < m.size(); ++j) edges.emplace_back(m[i], m[j]);
    cs.communities.emplace_back(m);
  }
  return {Graph::from_edges(next, edges), cs};
}

}  // namespace

TEST(InfoNce, SingleItemIsZero) {
  Matrix a = t::random_matrix(1, 4, 1), p = t::random_matrix(1, 4, 2);
  EXPECT_NEAR(loss_ns(a, p, 0.1).value, 0.0, 1e-12);
  EXPECT_NEAR(loss_ss(a, p, 0.1).value, 0.0, 1e-12);
}

TEST(InfoNce, OpposedPairsClosedForm) {
  Matrix a(2, 3);
  a << 1, 0, 0, -1, 0, 0;
  double expect = 2 * std::log1p(std::exp(-20.0));
  EXPECT_NEAR(loss_ns(a, a, 0.1).value, expect, 1e-15);
}

TEST(InfoNce, UniformSimilarityGivesLogBatchPerItem) {
  for (Eigen::Index b : {2, 5, 9}) {
    Matrix a = RowVector::Constant(3, 0.7).replicate(b, 1);
    EXPECT_NEAR(loss_ns(a, a, 0.1).value / static_cast<double>(b), std::log(static_cast<double>(b)), 1e-12);
  }
}

TEST(InfoNce, NonNegativeAndSameFormForBothLosses) {
  Matrix a = t::random_matrix(6, 5, 3), p = t::random_matrix(6, 5, 4);
  auto ns = loss_ns(a, p, 0.1), ss = loss_ss(a, p, 0.1);
  EXPECT_GE(ns.value, 0.0);
  EXPECT_EQ(ns.value, ss.value);
  EXPECT_EQ(ns.grad_anchor, ss.grad_anchor);
}

TEST(InfoNce, ZeroVectorStaysFinite) {
  Matrix a = Matrix::Zero(3, 4), p = t::random_matrix(3, 4, 5);
  auto l = loss_ns(a, p, 0.1);
  EXPECT_TRUE(std::isfinite(l.value));
  EXPECT_TRUE(l.grad_anchor.allFinite());
  EXPECT_TRUE(l.grad_positive.allFinite());
}

TEST(InfoNce, InputGradientsMatchFiniteDifferences) {
  MatrixPair x{t::random_matrix(5, 4, 7), t::random_matrix(5, 4, 8)};
  auto l = info_nce(x.a, x.b, 0.1);
  MatrixPair grad{l.grad_anchor, l.grad_positive};
  auto c = t::check_gradient(x, grad, [](const MatrixPair& m) { return info_nce(m.a, m.b, 0.1).value; });
  EXPECT_LE(c.max_rel, 1e-4) << c.worst;
  EXPECT_GT(c.max_abs_grad, 0.0);
}

TEST(BatchObjective, WeightGradientsMatchFiniteDifferences) {
  auto g = t::toy_graph();
  auto feats = structural_features(g);
  auto cfg = small_config();
  auto params = init_encoder(cfg);
  Rng rng(7);
  std::vector<NodeId> batch{0, 1, 2, 3, 4};
  auto plan = plan_batch(g, batch, cfg, rng);
  for (auto [wns, wss] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}, std::pair{1.0, 0.5}}) {
    auto obj = batch_objective(params.weights, plan, feats, cfg.tau, wns, wss);
    EXPECT_NEAR(obj.total, wns * obj.loss_ns + wss * obj.loss_ss, 1e-12);
    auto c = t::check_gradient(params.weights, obj.grad, [&](const EncoderWeights& w) {
      return batch_objective(w, plan, feats, cfg.tau, wns, wss).total;
    });
    EXPECT_LE(c.max_rel, 1e-4) << "weights " << wns << "/" << wss << ": " << c.worst;
    EXPECT_GT(c.max_abs_grad, 0.0);
  }
}

TEST(BatchPlan, EgosAndCorruptionFollowConfig) {
  auto g = t::toy_graph();
  EncoderConfig cfg;
  cfg.k = 2;
  Rng rng(3);
  std::vector<NodeId> batch{1, 5};
  auto plan = plan_batch(g, batch, cfg, rng);
  ASSERT_EQ(plan.egos.size(), 2u);
  EXPECT_EQ(plan.egos[0].size(), k_ego(g, 1, 2).size());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(plan.context.nodes[plan.anchor_local[i]], batch[i]);
    auto ego = k_ego(g, batch[i], 2);
    EXPECT_EQ(plan.corrupted[i].size(), 1 + corruption_keep_count(ego.size() - 1, cfg.rho));
  }
}

// ---------------------------------------------------------------------------

TEST(EncodeSubgraph, IsolatedZeroNodeAndPooling) {
  auto cfg = small_config();
  auto params = init_encoder(cfg);
  auto g = Graph::from_edges(3, {{0, 1}});
  FeatureTable zero = FeatureTable::Zero(3, 5);
  auto iso = encode_subgraph(params, k_ego(g, 2, 1), zero);
  EXPECT_TRUE(iso.nodes.isZero());

  auto feats = structural_features(t::toy_graph());
  auto pair = encode_subgraph(params, induced_subgraph(t::toy_graph(), {1, 2}, {1}), feats);
  EXPECT_TRUE(pair.pooled.isApprox(pair.nodes.row(0) + pair.nodes.row(1), 1e-14));
  EXPECT_THROW(encode_subgraph(params, k_ego(g, 0, 1), FeatureTable::Zero(3, 4)), Error);
}

TEST(EncodeSubgraph, NodeOrderDoesNotChangeOutputs) {
  auto g = t::toy_graph();
  auto feats = structural_features(g);
  auto params = init_encoder(small_config());
  auto a = encode_subgraph(params, induced_subgraph(g, {0, 1, 2, 3, 4}, {2}), feats);
  auto b = encode_subgraph(params, induced_subgraph(g, {3, 0, 4, 2, 1}, {2}), feats);
  std::vector<int> pos_in_b{1, 4, 3, 0, 2};
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(a.nodes.row(i).isApprox(b.nodes.row(pos_in_b[i]), 1e-12));
}

TEST(EncodeAll, RelabelingPermutesRows) {
  Rng rng(5);
  auto pp = generate_planted_partition(6, 5, 0.5, 0.05, rng);
  std::vector<NodeId> perm(pp.graph.num_nodes());
  std::iota(perm.begin(), perm.end(), NodeId{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<NodeId, NodeId>> relabeled;
  for (auto [u, v] : pp.graph.edges()) relabeled.emplace_back(perm[u], perm[v]);
  auto h = Graph::from_edges(pp.graph.num_nodes(), relabeled);

  EncoderConfig cfg;
  cfg.seed = 2;
  auto params = init_encoder(cfg);
  auto za = encode_all(params, pp.graph, structural_features(pp.graph));
  auto zb = encode_all(params, h, structural_features(h));
  for (NodeId v = 0; v < pp.graph.num_nodes(); ++v) EXPECT_TRUE(za.row(v).isApprox(zb.row(perm[v]), 1e-12));
}

TEST(EncodeAll, ShapeZeroCaseAndDeterminism) {
  auto g = t::toy_graph();
  auto params = init_encoder(EncoderConfig{});
  auto feats = structural_features(g);
  auto z = encode_all(params, g, feats);
  EXPECT_EQ(z.rows(), 8);
  EXPECT_EQ(z.cols(), 128);
  EXPECT_EQ(z, encode_all(params, g, feats));
  EXPECT_TRUE(encode_all(params, g, FeatureTable::Zero(8, 5)).isZero());
}

TEST(EmbedCommunity, SumPooling) {
  Matrix z = t::random_matrix(6, 3, 4);
  std::vector<NodeId> single{2};
  EXPECT_EQ(embed_community(z, single), z.row(2));
  std::vector<NodeId> a{0, 1}, b{3, 5}, ab{0, 1, 3, 5};
  EXPECT_TRUE(embed_community(z, ab).isApprox(embed_community(z, a) + embed_community(z, b), 1e-14));
  std::vector<NodeId> three{1, 4, 5};
  RowVector brute = RowVector::Zero(3);
  for (int c = 0; c < 3; ++c) brute(c) = z(1, c) + z(4, c) + z(5, c);
  EXPECT_TRUE(embed_community(z, three).isApprox(brute, 1e-14));
  EXPECT_THROW(embed_community(z, std::vector<NodeId>{}), Error);
  EXPECT_THROW(embed_community(z, std::vector<NodeId>{6}), Error);
}

// ---------------------------------------------------------------------------

TEST(Pretrain, ZeroEpochsLeaveParametersUnchanged) {
  auto g = t::toy_graph();
  EncoderConfig cfg;
  cfg.epochs = 0;
  auto params = init_encoder(cfg);
  Rng rng(1);
  auto out = pretrain_encoder(g, structural_features(g), params, rng);
  EXPECT_TRUE(identical(out.params.weights, params.weights));
  EXPECT_TRUE(out.epoch_loss.empty());
}

TEST(Pretrain, SeededRunsAreBitIdentical) {
  Rng g_rng(2);
  auto pp = generate_planted_partition(5, 6, 0.5, 0.02, g_rng);
  auto feats = structural_features(pp.graph);
  EncoderConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 8;
  Rng a(9), b(9);
  auto ra = pretrain_encoder(pp.graph, feats, init_encoder(cfg), a);
  auto rb = pretrain_encoder(pp.graph, feats, init_encoder(cfg), b);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  EXPECT_TRUE(identical(ra.params.weights, rb.params.weights));
}

TEST(Pretrain, LossDropsAndBlocksSeparateOnPlantedPartition) {
  Rng g_rng(2024);
  auto pp = generate_planted_partition(10, 8, 0.3, 0.01, g_rng);
  auto feats = structural_features(pp.graph);
  EncoderConfig cfg;
  cfg.seed = 1;
  Rng rng(mix_seed(cfg.seed, 2));
  auto r = pretrain_encoder(pp.graph, feats, init_encoder(cfg), rng);
  ASSERT_EQ(r.epoch_loss.size(), 30u);
  EXPECT_LT(r.epoch_loss[4], r.epoch_loss[0]);
  auto [intra, inter] = t::block_cosines(encode_all(r.params, pp.graph, feats), pp.communities);
  EXPECT_GE(intra - inter, 0.1);
}

TEST(Pretrain, CliquesOfDistinctSizesSeparate) {
  auto [g, cs] = graded_cliques(6, 3);
  auto feats = structural_features(g);
  EncoderConfig cfg;
  cfg.seed = 3;
  Rng rng(4);
  auto r = pretrain_encoder(g, feats, init_encoder(cfg), rng);
  auto [intra, inter] = t::block_cosines(encode_all(r.params, g, feats), cs);
  EXPECT_GT(intra, inter);
}

TEST(Pretrain, RejectsMismatchedFeatures) {
  auto g = t::toy_graph();
  Rng rng(1);
  EXPECT_THROW(pretrain_encoder(g, FeatureTable::Zero(8, 3), init_encoder(EncoderConfig{}), rng), Error);
  EncoderConfig bad;
  bad.tau = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.rho = 1.2;
  EXPECT_THROW(bad.validate(), Error);
}

// ---------------------------------------------------------------------------

TEST(EncoderCheckpoint, RoundTripAndVersionCheck) {
  auto dir = t::scratch_dir("encoder_ckpt");
  EncoderConfig cfg;
  cfg.tau = 0.2;
  cfg.rho = 0.7;
  cfg.lambda = 0.5;
  cfg.seed = 77;
  auto params = init_encoder(cfg);
  auto path = (dir / "e.ckpt").string();
  save_encoder(path, params);
  auto back = load_encoder(path);
  EXPECT_EQ(back.config.tau, 0.2);
  EXPECT_EQ(back.config.rho, 0.7);
  EXPECT_EQ(back.config.lambda, 0.5);
  EXPECT_EQ(back.config.seed, 77u);
  auto rounded = params.weights;
  round_to_float(rounded);
  EXPECT_TRUE(identical(back.weights, rounded));

  auto bytes = t::slurp(path);
  bytes[8] = static_cast<char>(kCheckpointVersion + 1);
  t::write_text(dir / "v.ckpt", bytes);
  EXPECT_THROW(load_encoder((dir / "v.ckpt").string()), Error);
  EXPECT_THROW(load_encoder((dir / "missing.ckpt").string()), Error);
  auto other = t::slurp(path);
  other[0] = 'X';
  t::write_text(dir / "m.ckpt", other);
  EXPECT_THROW(load_encoder((dir / "m.ckpt").string()), Error);
  t::write_text(dir / "t.ckpt", t::slurp(path).substr(0, 200));
  EXPECT_THROW(load_encoder((dir / "t.ckpt").string()), Error);
}
