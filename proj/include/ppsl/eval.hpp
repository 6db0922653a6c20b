#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppsl/encoder.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/metrics.hpp"
#include "ppsl/prompt.hpp"
#include "ppsl/sampler.hpp"

namespace ppsl {

enum class Variant { Full, NoNE, NoSG, NoPF };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoNE: return "no-NE";
    case Variant::NoSG: return "no-SG";
    case Variant::NoPF: return "no-PF";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::Full, Variant::NoNE, Variant::NoSG, Variant::NoPF})
    if (s == to_string(v)) return v;
  throw Error("unknown variant '" + s + "' (expected full, no-NE, no-SG or no-PF)");
}

/// splitmix64 finalizer over a pair, for per-query seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Read-only state shared by all queries of a run.
struct Pipeline {
  const Graph* graph = nullptr;
  FeatureTable features;
  CommunitySet ground_truth;
  CommunitySet known;
  std::vector<std::size_t> known_index;  // known[i] == ground_truth[known_index[i]]
  SplitMode split = SplitMode::Disjoint;

  std::optional<EmbeddingTable> embeddings;
  std::optional<AgentWeights> agent;      // trained on embeddings
  std::optional<AgentWeights> raw_agent;  // trained on structural features (no-NE)

  PromptConfig prompt;
  std::size_t ego_cap = 2000;
  int fallback_ego_k = 2;  // initial community radius without the agent (no-SG)
  std::uint64_t seed = 0;

  std::size_t size_cap() const { return known.max_size(); }
};

struct Detection {
  Community initial;
  Community predicted;
  std::vector<std::size_t> retrieved;  // indices into Pipeline::known
};

/// Runs one query through the chosen variant.
inline Detection detect(const Pipeline& p, const QueryNode& q, Variant variant) {
  const Graph& g = *p.graph;
  if (!g.valid(q.node)) throw Error("unknown query node " + std::to_string(q.node));

  const EmbeddingTable* table = nullptr;
  const AgentWeights* agent = nullptr;
  if (variant == Variant::NoNE) {
    table = &p.features;
    if (!p.raw_agent) throw Error("variant no-NE needs agent_raw.ckpt (train-agent --variant no-NE)");
    agent = &*p.raw_agent;
  } else {
    if (!p.embeddings) throw Error("missing encoder.ckpt (run pretrain first)");
    table = &*p.embeddings;
    if (variant != Variant::NoSG) {
      if (!p.agent) throw Error("missing agent.ckpt (run train-agent first)");
      agent = &*p.agent;
    }
  }

  Detection d;
  if (variant == Variant::NoSG)
    d.initial = Community(k_ego_nodes(g, std::span<const NodeId>(&q.node, 1), p.fallback_ego_k, p.ego_cap));
  else
    d.initial = generate_initial_community(*agent, g, q.node, *table, p.size_cap());

  if (variant == Variant::NoPF) {
    d.predicted = d.initial;
    return d;
  }

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < p.known.size(); ++i)
    if (p.split == SplitMode::Disjoint || p.known_index[i] != q.truth_index) pool.push_back(i);
  CommunitySet candidates = select(p.known, pool);
  auto top = retrieve_similar(*table, d.initial, candidates, p.prompt.m);
  for (auto i : top) d.retrieved.push_back(pool[i]);

  Rng rng(mix_seed(p.seed, q.node));
  auto trained = train_prompt(select(candidates, top), g, *table, p.prompt, rng);
  d.predicted = predict_community(trained.params, *table, g, q.node, d.initial);
  return d;
}

struct QueryResult {
  NodeId query = 0;
  Community predicted;
  Community truth;
  Scores scores;
  double seconds = 0;
  std::optional<std::string> error;
};

struct RunReport {
  Variant variant = Variant::Full;
  std::vector<QueryResult> rows;
  Scores mean;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

/// Arithmetic means over rows without an error.
inline Scores mean_scores(std::span<const QueryResult> rows) {
  Scores m;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.error) continue;
    m.precision += r.scores.precision;
    m.recall += r.scores.recall;
    m.fscore += r.scores.fscore;
    m.jaccard += r.scores.jaccard;
    ++n;
  }
  if (n > 0) {
    double k = static_cast<double>(n);
    m.precision /= k, m.recall /= k, m.fscore /= k, m.jaccard /= k;
  }
  return m;
}

inline QueryResult run_query(const Pipeline& p, const QueryNode& q, Variant variant) {
  QueryResult r;
  r.query = q.node;
  try {
    r.truth = p.ground_truth[q.truth_index];
    auto t0 = std::chrono::steady_clock::now();
    auto d = detect(p, q, variant);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.predicted = std::move(d.predicted);
    r.scores = score_pair(r.predicted.members(), r.truth.members());
  } catch (const Error& e) {
    r.error = e.what();
  }
  return r;
}

/// Evaluates every query; rows keep the order of `queries` regardless of
/// `threads`.
inline RunReport run_queries(const Pipeline& p, std::span<const QueryNode> queries, Variant variant,
                             unsigned threads = 1) {
  RunReport rep;
  rep.variant = variant;
  rep.seed = p.seed;
  rep.rows.resize(queries.size());
  if (threads <= 1 || queries.size() < 2) {
    for (std::size_t i = 0; i < queries.size(); ++i) rep.rows[i] = run_query(p, queries[i], variant);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < queries.size();) rep.rows[i] = run_query(p, queries[i], variant);
      });
    for (auto& th : pool) th.join();
  }
  rep.mean = mean_scores(rep.rows);
  return rep;
}

struct Summary {
  std::size_t runs = 0;
  Scores mean;
  Scores std;  // sample standard deviation across runs
};

inline Summary aggregate(std::span<const Scores> per_run) {
  if (per_run.empty()) throw Error("aggregate: no reports");
  Summary s;
  s.runs = per_run.size();
  auto fields = [](Scores& x) { return std::array<double*, 4>{&x.precision, &x.recall, &x.fscore, &x.jaccard}; };
  auto mean = fields(s.mean);
  auto sd = fields(s.std);
  for (std::size_t f = 0; f < 4; ++f) {
    double sum = 0;
    for (auto r : per_run) sum += *fields(r)[f];
    *mean[f] = sum / static_cast<double>(per_run.size());
    if (per_run.size() > 1) {
      double ss = 0;
      for (auto r : per_run) {
        double d = *fields(r)[f] - *mean[f];
        ss += d * d;
      }
      *sd[f] = std::sqrt(ss / static_cast<double>(per_run.size() - 1));
    }
  }
  return s;
}

inline Summary aggregate(std::span<const RunReport> reports) {
  std::vector<Scores> s;
  for (const auto& r : reports) s.push_back(r.mean);
  return aggregate(std::span<const Scores>(s));
}

// ---------------------------------------------------------------------------
// Records

inline nlohmann::json external_ids(const Graph& g, const Community& c) {
  auto arr = nlohmann::json::array();
  for (NodeId v : c.sorted()) arr.push_back(g.external_id(v));
  return arr;
}

/// `seconds` is null unless timing is requested, so that repeated runs
/// produce identical files.
inline nlohmann::json to_record(const Graph& g, const QueryResult& r, bool with_timing) {
  nlohmann::json j;
  j["query"] = g.valid(r.query) ? nlohmann::json(g.external_id(r.query)) : nlohmann::json(r.query);
  if (r.error) {
    j["error"] = *r.error;
    return j;
  }
  j["pred"] = external_ids(g, r.predicted);
  j["truth"] = external_ids(g, r.truth);
  j["precision"] = r.scores.precision;
  j["recall"] = r.scores.recall;
  j["fscore"] = r.scores.fscore;
  j["jaccard"] = r.scores.jaccard;
  j["seconds"] = with_timing ? nlohmann::json(r.seconds) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json summary_record(const RunReport& rep) {
  std::size_t errors = 0;
  for (const auto& r : rep.rows) errors += r.error ? 1 : 0;
  return {{"summary", true},
          {"variant", to_string(rep.variant)},
          {"queries", rep.rows.size()},
          {"errors", errors},
          {"precision", rep.mean.precision},
          {"recall", rep.mean.recall},
          {"fscore", rep.mean.fscore},
          {"jaccard", rep.mean.jaccard},
          {"seed", rep.seed},
          {"config", rep.fingerprint}};
}

}  // namespace ppsl
