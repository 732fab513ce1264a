#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "proia/common.hpp"

namespace proia {

// Undirected attributed graph. Immutable after construction; edges are stored
// as normalized (i < j) pairs, sorted and deduplicated.
class Graph {
 public:
  Graph() = default;

  Graph(int node_count, std::vector<std::pair<int, int>> edges, Mat features,
        std::vector<int> labels, std::optional<std::vector<int>> sensitive = std::nullopt)
      : node_count_(node_count),
        features_(std::move(features)),
        labels_(std::move(labels)),
        sensitive_(std::move(sensitive)) {
    require(node_count_ > 0, "Graph: node_count must be positive");
    require(features_.rows() == node_count_, "Graph: features row count != node_count");
    require(static_cast<int>(labels_.size()) == node_count_, "Graph: labels length != node_count");
    if (sensitive_) {
      require(static_cast<int>(sensitive_->size()) == node_count_,
              "Graph: sensitive length != node_count");
    }
    for (auto& [a, b] : edges) {
      require(a >= 0 && a < node_count_ && b >= 0 && b < node_count_,
              "Graph: edge endpoint out of range");
      require(a != b, "Graph: self-loops are not stored");
      if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    adjacency_.assign(static_cast<std::size_t>(node_count_), {});
    for (const auto& [a, b] : edges_) {
      adjacency_[static_cast<std::size_t>(a)].push_back(b);
      adjacency_[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
  }

  int node_count() const { return node_count_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }

  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const Mat& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::optional<std::vector<int>>& sensitive() const { return sensitive_; }
  const std::vector<int>& neighbors(int v) const {
    return adjacency_[static_cast<std::size_t>(v)];
  }
  int degree(int v) const { return static_cast<int>(neighbors(v).size()); }

  int num_classes() const {
    int c = 0;
    for (int y : labels_) c = std::max(c, y + 1);
    return c;
  }

  int num_sensitive_classes() const {
    require(sensitive_.has_value(), "Graph: sensitive attribute absent");
    int c = 0;
    for (int y : *sensitive_) c = std::max(c, y + 1);
    return c;
  }

  bool has_edge(int a, int b) const {
    const auto& nbrs = neighbors(a);
    return std::binary_search(nbrs.begin(), nbrs.end(), b);
  }

  // Same nodes/attributes, different edge set.
  Graph with_edges(std::vector<std::pair<int, int>> edges) const {
    return Graph(node_count_, std::move(edges), features_, labels_, sensitive_);
  }

  Graph with_features(Mat features) const {
    return Graph(node_count_, edges_, std::move(features), labels_, sensitive_);
  }

 private:
  int node_count_ = 0;
  std::vector<std::pair<int, int>> edges_;
  Mat features_;
  std::vector<int> labels_;
  std::optional<std::vector<int>> sensitive_;
  std::vector<std::vector<int>> adjacency_;
};

// Disjoint node pools for the attack pipeline. All index vectors are sorted.
struct NodeSplit {
  std::vector<int> target_train, target_test;
  std::vector<int> shadow_train, shadow_test;
  std::vector<int> attack_train, attack_test;

  void validate(int node_count, bool mia) const {
    auto check = [&](const std::vector<int>& v, const char* name) {
      for (int i : v) {
        require(i >= 0 && i < node_count, std::string("NodeSplit: index out of range in ") + name);
      }
      require(std::is_sorted(v.begin(), v.end()), std::string("NodeSplit: unsorted ") + name);
      require(std::adjacent_find(v.begin(), v.end()) == v.end(),
              std::string("NodeSplit: duplicates in ") + name);
    };
    check(target_train, "target_train");
    check(target_test, "target_test");
    check(shadow_train, "shadow_train");
    check(shadow_test, "shadow_test");
    check(attack_train, "attack_train");
    check(attack_test, "attack_test");
    require(!intersects(target_train, target_test), "NodeSplit: target train/test overlap");
    require(!intersects(shadow_train, shadow_test), "NodeSplit: shadow train/test overlap");
    if (mia) {
      std::vector<int> target_pool = merged(target_train, target_test);
      std::vector<int> shadow_pool = merged(shadow_train, shadow_test);
      require(!intersects(target_pool, shadow_pool), "NodeSplit: shadow/target pools overlap");
    }
    require(!intersects(attack_train, attack_test), "NodeSplit: attack train/test overlap");
  }

  static bool intersects(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) return true;
      if (a[i] < b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    return false;
  }

  static std::vector<int> merged(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  }
};

}  // namespace proia
