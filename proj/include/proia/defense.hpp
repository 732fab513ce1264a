#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "proia/graph.hpp"
#include "proia/rng.hpp"
#include "proia/victim.hpp"

namespace proia {

enum class DefenseKind { none, vandp, neighb };

inline const char* defense_name(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::vandp: return "vandp";
    case DefenseKind::neighb: return "neighb";
  }
  return "?";
}

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double budget = 0.2;        // vandp noise scale (sigma = budget)
  double perturb_rate = 0.5;  // neighb fraction of incident edges rewired
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == DefenseKind::vandp) require(budget > 0.0, "DefenseSpec: budget must be positive");
    if (kind == DefenseKind::neighb) {
      require(perturb_rate >= 0.0 && perturb_rate <= 1.0,
              "DefenseSpec: perturb_rate must lie in [0,1]");
    }
  }
};

// Gaussian output perturbation: add N(0, budget^2) per entry, clip to [0, inf)
// and renormalize each row; a fully clipped row falls back to uniform.
inline Mat vandp_noise(const Mat& posteriors, double budget, std::uint64_t seed) {
  require(budget > 0.0, "vandp_noise: budget must be positive");
  Rng rng(seed);
  Mat out = posteriors;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = std::max(0.0, out(i, j) + rng.normal(0.0, budget));
    }
    const double s = out.row(i).sum();
    if (s > 0.0) {
      out.row(i) /= s;
    } else {
      out.row(i).setConstant(1.0 / static_cast<double>(out.cols()));
    }
  }
  return out;
}

// Degree-preserving query-side rewiring: for each query node, a perturb_rate
// fraction of its incident edges is redirected to uniformly random
// non-neighbors. Only the query node's own aggregation sees the change.
inline NeighborOverride neighb_perturb(const Graph& g, const std::vector<int>& query_nodes,
                                       double perturb_rate, std::uint64_t seed) {
  require(perturb_rate >= 0.0 && perturb_rate <= 1.0, "neighb_perturb: rate out of range");
  NeighborOverride ov;
  if (perturb_rate == 0.0) return ov;
  Rng rng(seed);
  for (int v : query_nodes) {
    require(v >= 0 && v < g.node_count(), "neighb_perturb: node out of range");
    const std::vector<int>& nbrs = g.neighbors(v);
    const int deg = static_cast<int>(nbrs.size());
    if (deg == 0) continue;
    const int k = static_cast<int>(std::llround(perturb_rate * deg));
    if (k == 0) continue;

    // Choose which incident edges to rewire.
    std::vector<int> order = rng.permutation(deg);
    std::vector<bool> rewire(static_cast<std::size_t>(deg), false);
    for (int i = 0; i < k; ++i) rewire[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    std::vector<int> kept;
    std::vector<bool> taken(static_cast<std::size_t>(g.node_count()), false);
    taken[static_cast<std::size_t>(v)] = true;
    for (int u : nbrs) taken[static_cast<std::size_t>(u)] = true;
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      if (!rewire[i]) kept.push_back(nbrs[i]);
    }
    // Draw replacements uniformly from current non-neighbors.
    int replaced = 0;
    while (replaced < k) {
      std::vector<int> candidates;
      for (int u = 0; u < g.node_count(); ++u) {
        if (!taken[static_cast<std::size_t>(u)]) candidates.push_back(u);
      }
      if (candidates.empty()) break;  // tiny graphs: nothing left to rewire to
      const int pick = candidates[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(candidates.size())))];
      taken[static_cast<std::size_t>(pick)] = true;
      kept.push_back(pick);
      ++replaced;
    }
    std::sort(kept.begin(), kept.end());
    ov.nbrs[v] = std::move(kept);
  }
  return ov;
}

}  // namespace proia
