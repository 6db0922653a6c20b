#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ppsl {

using NodeId = std::uint32_t;
using Rng = std::mt19937_64;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Immutable simple undirected graph in CSR form. Internal ids are dense
/// 0..n-1; the original (external) ids are kept for I/O.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph over `n` nodes. Self-loops are dropped and duplicate or
  /// reversed pairs collapse into a single edge. When `external_ids` is empty
  /// the external id of a node is its internal index.
  static Graph from_edges(std::size_t n, std::vector<std::pair<NodeId, NodeId>> edges,
                          std::vector<std::uint64_t> external_ids = {}) {
    Graph g;
    if (external_ids.empty()) {
      external_ids.resize(n);
      std::iota(external_ids.begin(), external_ids.end(), std::uint64_t{0});
    }
    if (external_ids.size() != n) throw Error("external id count does not match node count");
    std::vector<std::pair<NodeId, NodeId>> directed;
    directed.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw Error("edge endpoint out of range");
      if (u == v) continue;
      directed.emplace_back(u, v);
      directed.emplace_back(v, u);
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

    g.offsets_.assign(n + 1, 0);
    for (auto [u, v] : directed) ++g.offsets_[u + 1];
    for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
    g.targets_.reserve(directed.size());
    for (auto [u, v] : directed) g.targets_.push_back(v);

    g.external_ = std::move(external_ids);
    g.lookup_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!g.lookup_.emplace(g.external_[i], static_cast<NodeId>(i)).second)
        throw Error("duplicate external id " + std::to_string(g.external_[i]));
    }
    return g;
  }

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return targets_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {targets_.data() + offsets_[v], targets_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }

  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  bool valid(NodeId v) const { return v < num_nodes(); }

  std::uint64_t external_id(NodeId v) const { return external_[v]; }

  std::optional<NodeId> internal_id(std::uint64_t external) const {
    auto it = lookup_.find(external);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  /// Edges as (u, v) with u < v, in ascending order.
  std::vector<std::pair<NodeId, NodeId>> edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < num_nodes(); ++u)
      for (NodeId v : neighbors(u))
        if (u < v) out.emplace_back(u, v);
    return out;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
  std::vector<std::uint64_t> external_;
  std::unordered_map<std::uint64_t, NodeId> lookup_;
};

/// A nonempty deduplicated node set. Members keep their insertion order;
/// a sorted copy backs membership queries.
class Community {
 public:
  Community() = default;
  explicit Community(std::vector<NodeId> members) {
    std::unordered_set<NodeId> seen;
    for (NodeId v : members)
      if (seen.insert(v).second) members_.push_back(v);
    sorted_ = members_;
    std::sort(sorted_.begin(), sorted_.end());
  }

  const std::vector<NodeId>& members() const { return members_; }
  const std::vector<NodeId>& sorted() const { return sorted_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  bool contains(NodeId v) const { return std::binary_search(sorted_.begin(), sorted_.end(), v); }
  NodeId min_member() const { return sorted_.front(); }

  friend bool operator==(const Community& a, const Community& b) { return a.sorted_ == b.sorted_; }

 private:
  std::vector<NodeId> members_;
  std::vector<NodeId> sorted_;
};

enum class CommunityRole { KnownTraining, GroundTruth };

struct CommunitySet {
  std::vector<Community> communities;
  CommunityRole role = CommunityRole::GroundTruth;

  std::size_t size() const { return communities.size(); }
  const Community& operator[](std::size_t i) const { return communities[i]; }

  std::size_t max_size() const {
    std::size_t m = 0;
    for (const auto& c : communities) m = std::max(m, c.size());
    return m;
  }
};

struct CommunityLoad {
  CommunitySet set;
  std::size_t dropped_ids = 0;
};

/// Rows are nodes; columns are [deg, max, min, mean, std] of neighbor degrees.
using FeatureTable = Eigen::MatrixXd;

/// Induced subgraph of a parent graph. `nodes` holds parent ids; local index i
/// refers to nodes[i]. `center` records the seed node(s).
struct Subgraph {
  std::vector<NodeId> nodes;
  std::vector<std::vector<std::uint32_t>> adjacency;
  std::vector<NodeId> center;

  std::size_t size() const { return nodes.size(); }

  std::vector<std::pair<NodeId, NodeId>> edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (auto j : adjacency[i]) {
        NodeId a = nodes[i], b = nodes[j];
        if (a < b) out.emplace_back(a, b);
      }
    std::sort(out.begin(), out.end());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Ingestion

namespace detail {

inline bool parse_u64(const std::string& token, std::uint64_t& out) {
  if (token.empty()) return false;
  std::uint64_t v = 0;
  for (char ch : token) {
    if (ch < '0' || ch > '9') return false;
    auto digit = static_cast<std::uint64_t>(ch - '0');
    if (v > (std::numeric_limits<std::uint64_t>::max() - digit) / 10) return false;
    v = v * 10 + digit;
  }
  out = v;
  return true;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline bool is_blank_or_comment(const std::string& line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace detail

/// Reads a SNAP-style edge list. External ids are remapped to internal
/// indices in ascending external-id order.
inline Graph load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open edge list: " + path);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank_or_comment(line)) continue;
    auto tok = detail::split_ws(line);
    std::uint64_t u = 0, v = 0;
    if (tok.size() != 2 || !detail::parse_u64(tok[0], u) || !detail::parse_u64(tok[1], v))
      throw ParseError(path, lineno, "expected two non-negative integer ids");
    raw.emplace_back(u, v);
  }
  if (raw.empty()) throw Error("edge list has no edges: " + path);

  std::vector<std::uint64_t> ids;
  ids.reserve(raw.size() * 2);
  for (auto [u, v] : raw) {
    ids.push_back(u);
    ids.push_back(v);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  auto index_of = [&](std::uint64_t x) {
    return static_cast<NodeId>(std::lower_bound(ids.begin(), ids.end(), x) - ids.begin());
  };
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(raw.size());
  for (auto [u, v] : raw) edges.emplace_back(index_of(u), index_of(v));
  const std::size_t n = ids.size();
  return Graph::from_edges(n, std::move(edges), std::move(ids));
}

/// One community per line. Ids that are not in `g` are dropped and counted;
/// lines that end up empty are skipped.
inline CommunityLoad load_communities(const std::string& path, const Graph& g) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open community file: " + path);
  CommunityLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank_or_comment(line)) continue;
    std::vector<NodeId> members;
    for (const auto& tok : detail::split_ws(line)) {
      std::uint64_t ext = 0;
      if (!detail::parse_u64(tok, ext)) throw ParseError(path, lineno, "bad node id '" + tok + "'");
      if (auto id = g.internal_id(ext))
        members.push_back(*id);
      else
        ++out.dropped_ids;
    }
    if (!members.empty()) out.set.communities.emplace_back(std::move(members));
  }
  return out;
}

inline void write_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write edge list: " + path);
  for (auto [u, v] : g.edges()) out << g.external_id(u) << '\t' << g.external_id(v) << '\n';
}

inline void write_communities(const Graph& g, const CommunitySet& cs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write community file: " + path);
  for (const auto& c : cs.communities) {
    bool first = true;
    for (NodeId v : c.sorted()) {
      out << (first ? "" : "\t") << g.external_id(v);
      first = false;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Structure

inline FeatureTable structural_features(const Graph& g) {
  FeatureTable f = FeatureTable::Zero(static_cast<Eigen::Index>(g.num_nodes()), 5);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto nb = g.neighbors(v);
    if (nb.empty()) continue;
    double mx = 0, mn = std::numeric_limits<double>::infinity(), sum = 0;
    for (NodeId u : nb) {
      double d = static_cast<double>(g.degree(u));
      mx = std::max(mx, d);
      mn = std::min(mn, d);
      sum += d;
    }
    double n = static_cast<double>(nb.size());
    double mean = sum / n;
    double ss = 0;
    for (NodeId u : nb) {
      double d = static_cast<double>(g.degree(u)) - mean;
      ss += d * d;
    }
    f.row(v) << n, mx, mn, mean, std::sqrt(ss / n);
  }
  return f;
}

/// Subgraph of `g` induced by `nodes` (kept in the given order).
inline Subgraph induced_subgraph(const Graph& g, std::vector<NodeId> nodes, std::vector<NodeId> center) {
  Subgraph s;
  s.nodes = std::move(nodes);
  s.center = std::move(center);
  std::unordered_map<NodeId, std::uint32_t> local;
  local.reserve(s.nodes.size() * 2);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) local.emplace(s.nodes[i], static_cast<std::uint32_t>(i));
  s.adjacency.resize(s.nodes.size());
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    for (NodeId u : g.neighbors(s.nodes[i])) {
      auto it = local.find(u);
      if (it != local.end()) s.adjacency[i].push_back(it->second);
    }
    std::sort(s.adjacency[i].begin(), s.adjacency[i].end());
  }
  return s;
}

/// Nodes within `k` hops of any seed, in BFS layer order (ascending id within
/// a layer). With `cap > 0` the expansion stops once `cap` nodes are taken;
/// seeds are always kept.
inline std::vector<NodeId> k_ego_nodes(const Graph& g, std::span<const NodeId> seeds, int k, std::size_t cap = 0) {
  if (seeds.empty()) throw Error("k_ego: empty seed set");
  if (k < 0) throw Error("k_ego: negative hop count");
  std::vector<NodeId> layer(seeds.begin(), seeds.end());
  for (NodeId s : layer)
    if (!g.valid(s)) throw Error("k_ego: invalid seed id " + std::to_string(s));
  std::sort(layer.begin(), layer.end());
  layer.erase(std::unique(layer.begin(), layer.end()), layer.end());

  std::unordered_set<NodeId> seen(layer.begin(), layer.end());
  std::vector<NodeId> out = layer;
  for (int hop = 0; hop < k; ++hop) {
    if (cap > 0 && out.size() >= cap) break;
    std::vector<NodeId> next;
    for (NodeId v : layer)
      for (NodeId u : g.neighbors(v))
        if (seen.insert(u).second) next.push_back(u);
    if (next.empty()) break;
    std::sort(next.begin(), next.end());
    if (cap > 0 && out.size() + next.size() > cap) {
      next.resize(cap - out.size());
      out.insert(out.end(), next.begin(), next.end());
      break;
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

inline Subgraph k_ego(const Graph& g, std::span<const NodeId> seeds, int k, std::size_t cap = 0) {
  auto nodes = k_ego_nodes(g, seeds, k, cap);
  std::vector<NodeId> center(seeds.begin(), seeds.end());
  return induced_subgraph(g, std::move(nodes), std::move(center));
}

inline Subgraph k_ego(const Graph& g, NodeId seed, int k, std::size_t cap = 0) {
  return k_ego(g, std::span<const NodeId>(&seed, 1), k, cap);
}

/// Node count kept by corruption: ceil(rho * others), guarded against
/// round-off just above an integer.
inline std::size_t corruption_keep_count(std::size_t others, double rho) {
  double x = rho * static_cast<double>(others);
  auto keep = static_cast<std::size_t>(std::ceil(x - 1e-9));
  return std::min(keep, others);
}

/// Drops non-center nodes uniformly at random, keeping the center and
/// ceil(rho * (|s|-1)) others, and re-induces the edges from `s`.
inline Subgraph corrupt(const Subgraph& s, double rho, Rng& rng) {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error("corrupt: rho must be in (0, 1]");
  if (s.center.size() != 1) throw Error("corrupt: subgraph must have a single center node");
  auto cit = std::find(s.nodes.begin(), s.nodes.end(), s.center.front());
  if (cit == s.nodes.end()) throw Error("corrupt: center not in subgraph");
  auto center_local = static_cast<std::size_t>(cit - s.nodes.begin());

  std::vector<std::size_t> others;
  others.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != center_local) others.push_back(i);
  std::size_t keep = corruption_keep_count(others.size(), rho);
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
    std::swap(others[i], others[pick(rng)]);
  }
  std::vector<char> kept(s.size(), 0);
  kept[center_local] = 1;
  for (std::size_t i = 0; i < keep; ++i) kept[others[i]] = 1;

  std::vector<std::uint32_t> remap(s.size(), 0);
  Subgraph out;
  out.center = s.center;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (kept[i]) {
      remap[i] = static_cast<std::uint32_t>(out.nodes.size());
      out.nodes.push_back(s.nodes[i]);
    }
  out.adjacency.resize(out.nodes.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!kept[i]) continue;
    for (auto j : s.adjacency[i])
      if (kept[j]) out.adjacency[remap[i]].push_back(remap[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Queries and splits

struct QueryNode {
  NodeId node = 0;
  std::size_t truth_index = 0;  // index into the ground-truth CommunitySet
};

/// Ground-truth community of `v` under overlap: smallest minimum member id,
/// then smallest index.
inline std::optional<std::size_t> assigned_community(const CommunitySet& cs, NodeId v) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!cs[i].contains(v)) continue;
    if (!best || cs[i].min_member() < cs[*best].min_member()) best = i;
  }
  return best;
}

/// Nodes covered by the ground truth, sorted by id and taken at a fixed stride
/// of floor(pool / count) starting from the first.
inline std::vector<QueryNode> sample_query_nodes(const CommunitySet& cs, std::size_t count) {
  if (count == 0) throw Error("sample_query_nodes: count must be positive");
  std::vector<NodeId> pool;
  for (const auto& c : cs.communities) pool.insert(pool.end(), c.sorted().begin(), c.sorted().end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (pool.size() < count)
    throw Error("sample_query_nodes: pool of " + std::to_string(pool.size()) + " nodes is smaller than " +
                std::to_string(count));

  // Precompute assignment in one pass: communities scanned in order of
  // (min member, index).
  std::vector<std::size_t> order(cs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cs[a].min_member() < cs[b].min_member(); });
  std::unordered_map<NodeId, std::size_t> assignment;
  for (std::size_t idx : order)
    for (NodeId v : cs[idx].sorted()) assignment.emplace(v, idx);

  std::size_t stride = pool.size() / count;
  std::vector<QueryNode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    NodeId v = pool[i * stride];
    out.push_back({v, assignment.at(v)});
  }
  return out;
}

enum class SplitMode {
  Disjoint,  // known communities never include a query's ground truth
  PerQuery,  // known communities drawn from all; a query's own community is withheld at detection time
};

/// Samples up to `count` known-training communities uniformly without
/// replacement. Returns indices into `ground_truth`, ascending.
inline std::vector<std::size_t> split_known(const CommunitySet& ground_truth, std::span<const QueryNode> queries,
                                            std::size_t count, SplitMode mode, Rng& rng) {
  std::vector<char> excluded(ground_truth.size(), 0);
  if (mode == SplitMode::Disjoint)
    for (const auto& q : queries) excluded[q.truth_index] = 1;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ground_truth.size(); ++i)
    if (!excluded[i]) candidates.push_back(i);
  std::size_t take = std::min(count, candidates.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(take);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

// ---------------------------------------------------------------------------
// Synthetic fixture

struct PlantedPartition {
  Graph graph;
  CommunitySet communities;
};

/// Blocks of `size` consecutive nodes; each pair is joined with probability
/// p_in inside a block and p_out across blocks.
inline PlantedPartition generate_planted_partition(std::size_t n_communities, std::size_t size, double p_in,
                                                   double p_out, Rng& rng) {
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) throw Error("planted partition: need 0 <= p_out < p_in <= 1");
  if (n_communities == 0 || size == 0) throw Error("planted partition: empty configuration");
  std::size_t n = n_communities * size;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      double p = (u / size == v / size) ? p_in : p_out;
      if (coin(rng) < p) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  PlantedPartition out;
  out.graph = Graph::from_edges(n, std::move(edges));
  for (std::size_t b = 0; b < n_communities; ++b) {
    std::vector<NodeId> members(size);
    std::iota(members.begin(), members.end(), static_cast<NodeId>(b * size));
    out.communities.communities.emplace_back(std::move(members));
  }
  return out;
}

}  // namespace ppsl
