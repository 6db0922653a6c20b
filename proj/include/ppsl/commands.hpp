#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppsl/checkpoint.hpp"
#include "ppsl/config.hpp"
#include "ppsl/encoder.hpp"
#include "ppsl/eval.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/sampler.hpp"

namespace ppsl {

/// Inputs shared by all subcommands. Checkpoint paths default to
/// conventional names under `out_dir`.
struct CommandOptions {
  PipelineConfig config;
  std::filesystem::path out_dir = "run";
  std::optional<std::string> queries;  // comma-separated external ids; auto-sampled otherwise
  Variant variant = Variant::Full;
  std::optional<std::filesystem::path> encoder_path;
  std::optional<std::filesystem::path> agent_path;
  std::ostream* log = nullptr;

  std::filesystem::path encoder_ckpt() const { return encoder_path.value_or(out_dir / "encoder.ckpt"); }
  std::filesystem::path agent_ckpt() const { return agent_path.value_or(out_dir / "agent.ckpt"); }
  std::filesystem::path raw_agent_ckpt() const { return out_dir / "agent_raw.ckpt"; }
};

namespace detail {

inline void log_line(const CommandOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << '\n';
}

inline void write_series(const std::filesystem::path& path, const std::vector<std::string>& header,
                         const std::vector<std::vector<double>>& columns) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "\t" : "") << header[c];
  out << '\n';
  std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    out << r + 1;
    for (const auto& col : columns) out << '\t' << format_value(col[r]);
    out << '\n';
  }
}

inline void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) throw Error("missing " + what + ": " + p.string());
}

}  // namespace detail

/// Graph, ground truth, the fixed query sample and the known-training split.
struct Dataset {
  Graph graph;
  CommunitySet ground_truth;
  std::vector<QueryNode> queries;
  std::vector<std::size_t> known_index;
  CommunitySet known;
  FeatureTable features;
};

inline Graph load_graph(const PipelineConfig& cfg) {
  if (cfg.data.graph.empty()) throw Error("config data.graph is not set");
  detail::require_file(cfg.data.graph, "graph file");
  return load_edge_list(cfg.data.graph);
}

inline Dataset load_dataset(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  Dataset d;
  d.graph = load_graph(cfg);
  if (cfg.data.communities.empty()) throw Error("config data.communities is not set");
  detail::require_file(cfg.data.communities, "community file");
  auto loaded = load_communities(cfg.data.communities, d.graph);
  if (log && loaded.dropped_ids > 0)
    *log << "warning: dropped " << loaded.dropped_ids << " community ids absent from the graph\n";
  d.ground_truth = std::move(loaded.set);
  d.queries = sample_query_nodes(d.ground_truth, cfg.data.query_count);
  Rng rng(mix_seed(cfg.run.seed, 1));
  d.known_index = split_known(d.ground_truth, d.queries, cfg.data.known_count, cfg.data.split, rng);
  d.known = select(d.ground_truth, d.known_index);
  d.known.role = CommunityRole::KnownTraining;
  if (log && d.known.size() < cfg.data.known_count)
    *log << "warning: only " << d.known.size() << " known communities available (requested "
         << cfg.data.known_count << ")\n";
  d.features = structural_features(d.graph);
  return d;
}

/// Single-block parameter set holding an embedding table.
struct EmbeddingBlock {
  Matrix table;

  template <class F>
  void for_each_block(F&& f) {
    f("embeddings", table);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f("embeddings", table);
  }
};

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  save_checkpoint(path.string(), "PPSLEMB", {{"rows", static_cast<double>(table.rows())}}, EmbeddingBlock{table});
}

inline EmbeddingTable embeddings_from(const EncoderParams& params, const Dataset& d) {
  return encode_all(params, d.graph, d.features);
}

// ---------------------------------------------------------------------------

struct SynthOutput {
  std::filesystem::path graph;
  std::filesystem::path communities;
};

inline SynthOutput cmd_synth(const CommandOptions& o) {
  const auto& s = o.config.synth;
  Rng rng(o.config.run.seed);
  auto pp = generate_planted_partition(s.blocks, s.size, s.p_in, s.p_out, rng);
  std::filesystem::create_directories(o.out_dir);
  SynthOutput out{o.out_dir / "graph.txt", o.out_dir / "communities.txt"};
  write_edge_list(pp.graph, out.graph.string());
  write_communities(pp.graph, pp.communities, out.communities.string());
  detail::log_line(o, "wrote " + std::to_string(pp.graph.num_nodes()) + " nodes, " +
                          std::to_string(pp.graph.num_edges()) + " edges, " +
                          std::to_string(pp.communities.size()) + " communities to " + o.out_dir.string());
  return out;
}

inline PretrainResult cmd_pretrain(const CommandOptions& o) {
  auto cfg = o.config.encoder;
  Dataset d;
  d.graph = load_graph(o.config);
  d.features = structural_features(d.graph);
  cfg.in_dim = static_cast<int>(d.features.cols());
  auto params = init_encoder(cfg);
  Rng rng(mix_seed(cfg.seed, 2));
  auto result = pretrain_encoder(d.graph, d.features, std::move(params), rng);
  round_to_float(result.params.weights);

  std::filesystem::create_directories(o.out_dir);
  save_encoder(o.encoder_ckpt().string(), result.params);
  save_embeddings(o.out_dir / "embeddings.bin", embeddings_from(result.params, d));
  detail::write_series(o.out_dir / "encoder_loss.tsv", {"epoch", "loss"}, {result.epoch_loss});
  detail::log_line(o, "encoder trained for " + std::to_string(cfg.epochs) + " epochs -> " + o.encoder_ckpt().string());
  return result;
}

/// Trains the expansion agent on the known communities. With variant no-NE
/// the agent reads raw structural features and is written to agent_raw.ckpt.
inline AgentHistory cmd_train_agent(const CommandOptions& o) {
  auto d = load_dataset(o.config, o.log);
  if (d.known.size() == 0) throw Error("train-agent: no known communities");
  EmbeddingTable table;
  std::filesystem::path out;
  if (o.variant == Variant::NoNE) {
    table = d.features;
    out = o.raw_agent_ckpt();
  } else {
    detail::require_file(o.encoder_ckpt(), "encoder checkpoint");
    table = embeddings_from(load_encoder(o.encoder_ckpt().string(), o.config.encoder), d);
    out = o.agent_ckpt();
  }
  auto weights = init_agent(static_cast<int>(table.cols()), o.config.agent);
  Rng rng(mix_seed(o.config.agent.seed, 3));
  auto hist = train_agent(weights, d.graph, d.known, table, o.config.agent, rng);
  round_to_float(weights);

  std::filesystem::create_directories(o.out_dir);
  save_agent(out.string(), weights, o.config.agent);
  auto stem = out.stem().string();
  detail::write_series(o.out_dir / (stem + "_loss.tsv"), {"epoch", "mean_return", "teacher_nll"},
                       {hist.mean_return, hist.teacher_nll});
  detail::log_line(o, "agent trained on " + std::to_string(d.known.size()) + " communities -> " + out.string());
  return hist;
}

/// Loads whatever the variant needs, failing with the missing path.
inline Pipeline build_pipeline(const CommandOptions& o, const Dataset& d, Variant variant) {
  Pipeline p;
  p.graph = &d.graph;
  p.features = d.features;
  p.ground_truth = d.ground_truth;
  p.known = d.known;
  p.known_index = d.known_index;
  p.split = o.config.data.split;
  p.prompt = o.config.prompt;
  p.ego_cap = o.config.run.ego_cap;
  p.fallback_ego_k = o.config.run.fallback_ego_k;
  p.seed = o.config.run.seed;
  if (p.known.size() == 0) throw Error("no known communities");
  if (variant == Variant::NoNE) {
    detail::require_file(o.raw_agent_ckpt(), "agent checkpoint (train-agent --variant no-NE)");
    p.raw_agent = load_agent(o.raw_agent_ckpt().string(), o.config.agent);
    return p;
  }
  detail::require_file(o.encoder_ckpt(), "encoder checkpoint");
  p.embeddings = embeddings_from(load_encoder(o.encoder_ckpt().string(), o.config.encoder), d);
  if (variant != Variant::NoSG) {
    detail::require_file(o.agent_ckpt(), "agent checkpoint");
    p.agent = load_agent(o.agent_ckpt().string(), o.config.agent);
  }
  return p;
}

inline std::vector<std::uint64_t> parse_query_ids(const std::string& s) {
  std::vector<std::uint64_t> ids;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::uint64_t v = 0;
    if (!detail::parse_u64(tok, v)) throw Error("bad query id '" + tok + "'");
    ids.push_back(v);
  }
  if (ids.empty()) throw Error("no query ids given");
  return ids;
}

struct DetectOutput {
  RunReport report;
  std::filesystem::path results;
};

/// Runs the chosen variant over the queries and writes one JSON record per
/// query plus a summary record.
inline DetectOutput cmd_ablate(const CommandOptions& o) {
  auto d = load_dataset(o.config, o.log);
  auto pipeline = build_pipeline(o, d, o.variant);

  // Each slot is either a resolvable query or an error message for the id.
  std::vector<std::variant<QueryNode, std::string>> slots;
  std::vector<std::uint64_t> requested;
  if (o.queries) {
    for (auto ext : parse_query_ids(*o.queries)) {
      requested.push_back(ext);
      auto id = d.graph.internal_id(ext);
      if (!id) {
        slots.emplace_back("unknown query id " + std::to_string(ext));
        continue;
      }
      auto truth = assigned_community(d.ground_truth, *id);
      if (!truth)
        slots.emplace_back("query id " + std::to_string(ext) + " has no ground-truth community");
      else
        slots.emplace_back(QueryNode{*id, *truth});
    }
  } else {
    for (const auto& q : d.queries) {
      requested.push_back(d.graph.external_id(q.node));
      slots.emplace_back(q);
    }
  }

  std::vector<QueryNode> runnable;
  for (const auto& s : slots)
    if (auto q = std::get_if<QueryNode>(&s)) runnable.push_back(*q);
  auto rep = run_queries(pipeline, runnable, o.variant, o.config.run.threads);
  rep.fingerprint = config_fingerprint(o.config);

  std::filesystem::create_directories(o.out_dir);
  DetectOutput out;
  out.results = o.out_dir / (o.variant == Variant::Full ? "results.jsonl" : "results_" + to_string(o.variant) + ".jsonl");
  std::ofstream f(out.results);
  if (!f) throw Error("cannot write " + out.results.string());
  std::vector<QueryResult> rows;
  std::size_t next = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (auto msg = std::get_if<std::string>(&slots[i])) {
      f << nlohmann::json{{"query", requested[i]}, {"error", *msg}}.dump() << '\n';
      QueryResult r;
      r.error = *msg;
      rows.push_back(std::move(r));
    } else {
      f << to_record(d.graph, rep.rows[next], o.config.run.timing).dump() << '\n';
      rows.push_back(rep.rows[next++]);
    }
  }
  rep.rows = std::move(rows);
  f << summary_record(rep).dump() << '\n';
  detail::log_line(o, to_string(o.variant) + ": mean F-score " + detail::format_value(rep.mean.fscore) + " over " +
                          std::to_string(runnable.size()) + " queries -> " + out.results.string());
  out.report = std::move(rep);
  return out;
}

inline DetectOutput cmd_detect(CommandOptions o) {
  o.variant = Variant::Full;
  return cmd_ablate(o);
}

struct EvalOutput {
  std::vector<Scores> per_run;  // mean over each file's rows
  Scores pooled;                // mean over all rows of all files
  Summary summary;              // across files
  std::size_t rows = 0;
};

/// Recomputes metrics from the pred/truth sets of result files.
inline EvalOutput cmd_eval(const std::vector<std::filesystem::path>& files) {
  if (files.empty()) throw Error("eval: no result files");
  EvalOutput out;
  std::vector<QueryResult> all;
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open results: " + path.string());
    std::vector<QueryResult> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), lineno, e.what());
      }
      if (j.contains("summary") || j.contains("error")) continue;
      auto ids = [](const nlohmann::json& arr) {
        std::vector<NodeId> v;
        for (const auto& x : arr) v.push_back(static_cast<NodeId>(x.get<std::uint64_t>()));
        return v;
      };
      QueryResult r;
      r.predicted = Community(ids(j.at("pred")));
      r.truth = Community(ids(j.at("truth")));
      r.scores = score_pair(r.predicted.members(), r.truth.members());
      rows.push_back(std::move(r));
    }
    out.per_run.push_back(mean_scores(rows));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  out.rows = all.size();
  out.pooled = mean_scores(all);
  out.summary = aggregate(std::span<const Scores>(out.per_run));
  return out;
}

}  // namespace ppsl
