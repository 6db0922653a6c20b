#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "ppsl/encoder.hpp"
#include "ppsl/graph.hpp"
#include "ppsl/nn.hpp"

namespace ppsl::testing {

struct GradCheck {
  double max_rel = 0;
  double max_abs_grad = 0;  // zero means the check was vacuous
  std::string worst;
  std::size_t checked = 0;
};

/// Five-point central differences over every entry of every block, compared
/// with an analytic gradient of the same shape.
template <ParameterSet P, class F>
GradCheck check_gradient(P params, const P& analytic, F&& objective, double h = 1e-4, double floor = 1e-6) {
  std::vector<const Matrix*> grads;
  analytic.for_each_block([&](std::string_view, const Matrix& m) { grads.push_back(&m); });
  std::vector<std::pair<std::string, Matrix*>> blocks;
  params.for_each_block([&](std::string_view name, Matrix& m) { blocks.emplace_back(std::string(name), &m); });

  GradCheck out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Matrix& m = *blocks[b].second;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double saved = m.data()[i];
      auto at = [&](double offset) {
        m.data()[i] = saved + offset;
        return objective(params);
      };
      double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      m.data()[i] = saved;
      double a = grads[b]->data()[i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      out.max_abs_grad = std::max(out.max_abs_grad, std::abs(a));
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = blocks[b].first + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

/// 0-1-2-3-4 path with a chord 1-3, plus a pendant 5 on 4 and a 6-7 pair
/// hanging off 5.
inline Graph toy_graph() {
  return Graph::from_edges(8, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {1, 3}, {4, 5}, {5, 6}, {6, 7}});
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Mean cosine similarity over same-block and cross-block node pairs.
inline std::pair<double, double> block_cosines(const Matrix& z, const CommunitySet& blocks) {
  std::vector<int> block(static_cast<std::size_t>(z.rows()), -1);
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (NodeId v : blocks[b].members()) block[v] = static_cast<int>(b);
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (Eigen::Index u = 0; u < z.rows(); ++u)
    for (Eigen::Index v = u + 1; v < z.rows(); ++v) {
      double c = cosine_similarity(z.row(u), z.row(v));
      if (block[static_cast<std::size_t>(u)] == block[static_cast<std::size_t>(v)]) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  return {intra / static_cast<double>(ni), inter / static_cast<double>(nx)};
}

/// Disjoint cliques of `size` nodes, consecutive ids per clique.
inline std::pair<Graph, CommunitySet> disjoint_cliques(std::size_t count, std::size_t size) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  CommunitySet cs;
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<NodeId> members;
    for (std::size_t i = 0; i < size; ++i) {
      auto u = static_cast<NodeId>(c * size + i);
      members.push_back(u);
      for (std::size_t j = i + 1; j < size; ++j) edges.emplace_back(u, static_cast<NodeId>(c * size + j));
    }
    cs.communities.emplace_back(std::move(members));
  }
  return {Graph::from_edges(count * size, std::move(edges)), std::move(cs)};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ppsl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace ppsl::testing
