#pragma once

#include <deque>
#include <utility>
#include <vector>

#include "proia/graph.hpp"
#include "proia/rng.hpp"

namespace proia {

// Jaccard similarity over the nonzero supports of two feature vectors.
// Both supports empty -> 0.
inline double jaccard_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& xi,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& xj) {
  require(xi.size() == xj.size(), "jaccard_similarity: length mismatch");
  int inter = 0, uni = 0;
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    const bool a = xi[k] != 0.0;
    const bool b = xj[k] != 0.0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Keeps an original edge (i,j) iff jaccard(x_i, x_j) >= t. The candidate set
// is the existing edge set, so this prunes rather than densifies.
inline Graph build_local_subgraph(const Graph& g, double t) {
  require(t >= 0.0, "build_local_subgraph: threshold must be >= 0");
  std::vector<std::pair<int, int>> kept;
  kept.reserve(g.edges().size());
  for (const auto& [i, j] : g.edges()) {
    if (jaccard_similarity(g.features().row(i), g.features().row(j)) >= t) {
      kept.emplace_back(i, j);
    }
  }
  return g.with_edges(std::move(kept));
}

// Adds each absent pair independently with probability q; existing edges stay.
inline Graph bernoulli_augment(const Graph& g, double q, std::uint64_t seed) {
  require(q >= 0.0 && q <= 1.0, "bernoulli_augment: q must be in [0,1]");
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges = g.edges();
  for (int i = 0; i < g.node_count(); ++i) {
    for (int j = i + 1; j < g.node_count(); ++j) {
      if (g.has_edge(i, j)) continue;
      if (rng.bernoulli(q)) edges.emplace_back(i, j);
    }
  }
  return g.with_edges(std::move(edges));
}

// Permutes feature rows uniformly at random; edges and labels are untouched.
inline Graph shuffle_features(const Graph& g, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(g.node_count());
  Mat shuffled(g.node_count(), g.feature_dim());
  for (int v = 0; v < g.node_count(); ++v) {
    shuffled.row(v) = g.features().row(perm[static_cast<std::size_t>(v)]);
  }
  return g.with_features(std::move(shuffled));
}

struct SubgraphResult {
  Graph subgraph;
  std::vector<int> original_index;  // subgraph node i came from original_index[i]
};

// Nodes at hop distance <= k from v, BFS order determined by sorted adjacency.
inline std::vector<int> khop_nodes(const Graph& g, int v, int k) {
  require(v >= 0 && v < g.node_count(), "khop: invalid center node");
  require(k >= 0, "khop: k must be >= 0");
  std::vector<int> dist(static_cast<std::size_t>(g.node_count()), -1);
  std::deque<int> queue{v};
  dist[static_cast<std::size_t>(v)] = 0;
  std::vector<int> nodes{v};
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (dist[static_cast<std::size_t>(u)] == k) continue;
    for (int w : g.neighbors(u)) {
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
        nodes.push_back(w);
        queue.push_back(w);
      }
    }
  }
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

inline SubgraphResult khop_subgraph(const Graph& g, int v, int k) {
  std::vector<int> nodes = khop_nodes(g, v, k);
  std::vector<int> remap(static_cast<std::size_t>(g.node_count()), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    remap[static_cast<std::size_t>(nodes[i])] = static_cast<int>(i);
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& [a, b] : g.edges()) {
    const int ra = remap[static_cast<std::size_t>(a)];
    const int rb = remap[static_cast<std::size_t>(b)];
    if (ra >= 0 && rb >= 0) edges.emplace_back(ra, rb);
  }
  Mat feats(static_cast<Eigen::Index>(nodes.size()), g.feature_dim());
  std::vector<int> labels(nodes.size());
  std::optional<std::vector<int>> sensitive;
  if (g.sensitive()) sensitive.emplace(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) = g.features().row(nodes[i]);
    labels[i] = g.labels()[static_cast<std::size_t>(nodes[i])];
    if (sensitive) (*sensitive)[i] = (*g.sensitive())[static_cast<std::size_t>(nodes[i])];
  }
  return {Graph(static_cast<int>(nodes.size()), std::move(edges), std::move(feats),
                std::move(labels), std::move(sensitive)),
          std::move(nodes)};
}

}  // namespace proia
