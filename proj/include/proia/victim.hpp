#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "proia/adam.hpp"
#include "proia/graph.hpp"
#include "proia/metrics.hpp"
#include "proia/pretrain.hpp"
#include "proia/rng.hpp"
#include "proia/tape.hpp"

namespace proia {

enum class BackboneKind { gcn, gat, sage };

inline const char* backbone_name(BackboneKind k) {
  switch (k) {
    case BackboneKind::gcn: return "gcn";
    case BackboneKind::gat: return "gat";
    case BackboneKind::sage: return "sage";
  }
  return "?";
}

struct BackboneSpec {
  BackboneKind kind = BackboneKind::gcn;
  int layers = 2;
  int hidden_dim = 256;
  double learning_rate = 1e-4;
  int epochs = 200;
  double weight_decay = 0.0;     // overfitting knob: 0 = no regularization
  bool prompt_at_train = true;   // condition on the prompt during training too

  void validate() const {
    require(layers >= 1, "BackboneSpec: layers must be >= 1");
    require(hidden_dim >= 1, "BackboneSpec: hidden_dim must be >= 1");
    require(learning_rate > 0.0, "BackboneSpec: learning_rate must be positive");
    require(epochs >= 0, "BackboneSpec: epochs must be nonnegative");
    require(weight_decay >= 0.0, "BackboneSpec: weight_decay must be nonnegative");
  }
};

// Per-query-node neighbor replacement; aggregation for a listed node uses the
// replacement list while every other node keeps the graph's own adjacency.
struct NeighborOverride {
  std::unordered_map<int, std::vector<int>> nbrs;
  bool empty() const { return nbrs.empty(); }
  const std::vector<int>* find(int v) const {
    auto it = nbrs.find(v);
    return it == nbrs.end() ? nullptr : &it->second;
  }
};

struct ModelHandle {
  BackboneSpec spec;
  std::vector<Mat> weights;
  std::uint64_t fingerprint = 0;  // digest of (graph, train nodes)
  double train_acc = 0.0;
  double test_acc = 0.0;
  bool prompt_conditioned = false;
  int num_classes = 0;
  std::vector<double> loss_curve;
};

inline std::uint64_t split_fingerprint(const Graph& g, const std::vector<int>& train_nodes) {
  std::string s = std::to_string(g.node_count()) + ":" + std::to_string(g.edge_count()) + ":";
  for (const auto& [a, b] : g.edges()) {
    s += std::to_string(a) + "," + std::to_string(b) + ";";
  }
  s += "|";
  for (int v : train_nodes) s += std::to_string(v) + ",";
  return fnv1a64(s);
}

// Fixed linear adapter from the prompt dimension to the victim's first-layer
// width: block means (dimension-equal case is the identity), so an all-ones
// prompt maps to all-ones at any width.
inline Mat adapt_prompt(const Mat& p, int target_dim) {
  require(target_dim >= 1, "adapt_prompt: target dimension must be positive");
  const int dp = static_cast<int>(p.cols());
  if (dp == target_dim) return p;
  Mat out(p.rows(), target_dim);
  for (int j = 0; j < target_dim; ++j) {
    int lo = static_cast<int>((static_cast<long long>(j) * dp) / target_dim);
    int hi = static_cast<int>((static_cast<long long>(j + 1) * dp) / target_dim);
    if (hi <= lo) hi = lo + 1;
    out.col(j) = p.middleCols(lo, hi - lo).rowwise().mean();
  }
  return out;
}

namespace victims_detail {

using ad::Tape;
using ad::Var;

struct VictimGraphStructure {
  // Generic incidence (self-loops + both directions), grouped by dst with
  // offsets so segment softmax can run per destination node.
  std::vector<int> dst, src, offsets;
  Mat gcn_weights;   // E x 1, row-normalized (A+I)
  std::vector<int> nb_dst, nb_src;  // neighbor-only incidences (no self-loops)
  Mat sage_weights;  // 1/deg per neighbor incidence
};

inline VictimGraphStructure build_structure(const Graph& g, const NeighborOverride* ov) {
  VictimGraphStructure s;
  const int n = g.node_count();
  s.offsets.push_back(0);
  std::vector<double> gw;
  std::vector<double> sw;
  for (int v = 0; v < n; ++v) {
    const std::vector<int>* nbrs = ov != nullptr ? ov->find(v) : nullptr;
    const std::vector<int>& list = nbrs != nullptr ? *nbrs : g.neighbors(v);
    const int deg = static_cast<int>(list.size());
    // Self-loop first, then neighbors.
    s.dst.push_back(v);
    s.src.push_back(v);
    gw.push_back(1.0 / static_cast<double>(deg + 1));
    for (int u : list) {
      require(u >= 0 && u < n, "victim: neighbor override index out of range");
      s.dst.push_back(v);
      s.src.push_back(u);
      gw.push_back(1.0 / static_cast<double>(deg + 1));
      s.nb_dst.push_back(v);
      s.nb_src.push_back(u);
      sw.push_back(1.0 / static_cast<double>(deg));
    }
    s.offsets.push_back(static_cast<int>(s.dst.size()));
  }
  s.gcn_weights = Eigen::Map<Vec>(gw.data(), static_cast<Eigen::Index>(gw.size()));
  s.sage_weights = sw.empty() ? Mat(0, 1)
                              : Mat(Eigen::Map<Vec>(sw.data(), static_cast<Eigen::Index>(sw.size())));
  return s;
}

// Weight layout per layer: gcn [W, b]; gat [W, a, b]; sage [W_self, W_nb, b].
inline int mats_per_layer(BackboneKind k) { return k == BackboneKind::gcn ? 2 : 3; }

inline std::vector<Mat> init_victim_weights(const BackboneSpec& spec, int in_dim, int classes,
                                            Rng& rng) {
  std::vector<Mat> w;
  for (int l = 0; l < spec.layers; ++l) {
    const int din = l == 0 ? in_dim : spec.hidden_dim;
    const int dout = l == spec.layers - 1 ? classes : spec.hidden_dim;
    switch (spec.kind) {
      case BackboneKind::gcn:
        w.push_back(detail::glorot(din, dout, rng));
        w.push_back(Mat::Zero(1, dout));
        break;
      case BackboneKind::gat:
        w.push_back(detail::glorot(din, dout, rng));
        w.push_back(detail::glorot(2 * dout, 1, rng));
        w.push_back(Mat::Zero(1, dout));
        break;
      case BackboneKind::sage:
        w.push_back(detail::glorot(din, dout, rng));
        w.push_back(detail::glorot(din, dout, rng));
        w.push_back(Mat::Zero(1, dout));
        break;
    }
  }
  return w;
}

// Forward to logits. The optional adapted prompt multiplies the first-layer
// projection(s) elementwise (all-ones prompt is the identity).
inline Var victim_logits_tape(Tape& t, const std::vector<Var>& w, const BackboneSpec& spec,
                              const Graph& g, const VictimGraphStructure& s,
                              const Mat* prompt_first_layer) {
  const int n = g.node_count();
  Var h = t.constant(g.features());
  int wi = 0;
  for (int l = 0; l < spec.layers; ++l) {
    const bool last = l == spec.layers - 1;
    Var out{nullptr, -1};
    switch (spec.kind) {
      case BackboneKind::gcn: {
        Var proj = t.matmul(h, w[wi]);
        if (l == 0 && prompt_first_layer != nullptr) {
          proj = t.cwise_mul(proj, t.constant(*prompt_first_layer));
        }
        Var agg = t.weighted_gather_sum(proj, s.dst, s.src, t.constant(s.gcn_weights), n);
        out = t.add_rowvec(agg, w[wi + 1]);
        wi += 2;
        break;
      }
      case BackboneKind::gat: {
        Var proj = t.matmul(h, w[wi]);
        if (l == 0 && prompt_first_layer != nullptr) {
          proj = t.cwise_mul(proj, t.constant(*prompt_first_layer));
        }
        Var cat = t.concat_cols({t.gather_rows(proj, s.dst), t.gather_rows(proj, s.src)});
        Var scores = t.leaky_relu(t.matmul(cat, w[wi + 1]), 0.2);
        Var alpha = t.segment_softmax(scores, s.offsets);
        Var agg = t.weighted_gather_sum(proj, s.dst, s.src, alpha, n);
        out = t.add_rowvec(agg, w[wi + 2]);
        wi += 3;
        break;
      }
      case BackboneKind::sage: {
        Var self_proj = t.matmul(h, w[wi]);
        Var nb_proj = t.matmul(h, w[wi + 1]);
        if (l == 0 && prompt_first_layer != nullptr) {
          Var pv = t.constant(*prompt_first_layer);
          self_proj = t.cwise_mul(self_proj, pv);
          nb_proj = t.cwise_mul(nb_proj, pv);
        }
        Var nb_mean = t.weighted_gather_sum(nb_proj, s.nb_dst, s.nb_src,
                                            t.constant(s.sage_weights), n);
        out = t.add_rowvec(t.add(self_proj, nb_mean), w[wi + 2]);
        wi += 3;
        break;
      }
    }
    h = last ? out : t.relu(out);
  }
  return h;
}

}  // namespace victims_detail

// Prompt adapted to the victim's first-layer output width, or nullopt.
inline std::optional<Mat> condition_prompt(const std::optional<PromptFeature>& prompt,
                                           const BackboneSpec& spec, const Graph& g,
                                           int classes) {
  if (!prompt.has_value()) return std::nullopt;
  require(prompt->p.rows() == g.node_count(),
          "victim: prompt row count does not match the graph");
  const int first_out = spec.layers == 1 ? classes : spec.hidden_dim;
  return adapt_prompt(prompt->p, first_out);
}

inline Mat query_posteriors(const ModelHandle& m, const Graph& g, const std::vector<int>& nodes,
                            const std::optional<PromptFeature>& prompt,
                            const NeighborOverride* override_nbrs = nullptr) {
  for (int v : nodes) require(v >= 0 && v < g.node_count(), "query_posteriors: node out of range");
  auto s = victims_detail::build_structure(g, override_nbrs);
  std::optional<Mat> cond = condition_prompt(prompt, m.spec, g, m.num_classes);

  ad::Tape t;
  std::vector<ad::Var> w;
  for (const Mat& mat : m.weights) w.push_back(t.constant(mat));
  ad::Var logits = victims_detail::victim_logits_tape(t, w, m.spec, g, s,
                                                      cond ? &*cond : nullptr);
  Mat post = t.val(t.row_softmax(t.gather_rows(logits, nodes)));
  return post;
}

inline ModelHandle train_victim(const Graph& g, const std::vector<int>& train_nodes,
                                const std::vector<int>& test_nodes, const BackboneSpec& spec,
                                const std::optional<PromptFeature>& prompt, std::uint64_t seed) {
  spec.validate();
  require(!train_nodes.empty(), "train_victim: empty train set");
  for (int v : train_nodes) require(v >= 0 && v < g.node_count(), "train_victim: bad node index");

  const int classes = g.num_classes();
  Rng rng(derive_seed(seed, "victim-init"));
  ModelHandle handle;
  handle.spec = spec;
  handle.num_classes = classes;
  handle.weights = victims_detail::init_victim_weights(spec, g.feature_dim(), classes, rng);
  handle.fingerprint = split_fingerprint(g, train_nodes);
  handle.prompt_conditioned = prompt.has_value() && spec.prompt_at_train;

  const std::optional<PromptFeature>& train_prompt =
      handle.prompt_conditioned ? prompt : std::nullopt;
  std::optional<Mat> cond = condition_prompt(train_prompt, spec, g, classes);
  auto s = victims_detail::build_structure(g, nullptr);

  std::vector<int> train_labels;
  for (int v : train_nodes) train_labels.push_back(g.labels()[static_cast<std::size_t>(v)]);

  Adam opt(spec.learning_rate);
  std::vector<Mat*> params;
  for (Mat& mat : handle.weights) params.push_back(&mat);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    ad::Tape t;
    std::vector<ad::Var> w;
    for (const Mat& mat : handle.weights) w.push_back(t.leaf(mat, true));
    ad::Var logits = victims_detail::victim_logits_tape(t, w, spec, g, s,
                                                        cond ? &*cond : nullptr);
    ad::Var loss = t.cross_entropy_mean(t.gather_rows(logits, train_nodes), train_labels);
    if (spec.weight_decay > 0.0) {
      // L2 on weight matrices only (biases and attention vectors excluded).
      const int per = victims_detail::mats_per_layer(spec.kind);
      ad::Var reg = t.scalar(0.0);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const int pos = static_cast<int>(i) % per;
        const bool is_weight = spec.kind == BackboneKind::sage ? pos <= 1 : pos == 0;
        if (is_weight) reg = t.add(reg, t.sum_all(t.cwise_mul(w[i], w[i])));
      }
      loss = t.add(loss, t.scale(reg, spec.weight_decay));
    }
    const double lv = t.val(loss)(0, 0);
    if (!std::isfinite(lv)) {
      throw std::runtime_error("train_victim: non-finite loss at epoch " + std::to_string(epoch));
    }
    handle.loss_curve.push_back(lv);
    t.backward(loss);
    std::vector<const Mat*> grads;
    for (ad::Var v : w) grads.push_back(&t.grad(v));
    opt.step(params, grads);
  }

  const std::optional<PromptFeature>& query_prompt = handle.prompt_conditioned ? prompt : std::nullopt;
  Mat train_post = query_posteriors(handle, g, train_nodes, query_prompt);
  handle.train_acc = accuracy(argmax_rows(train_post), train_labels);
  if (!test_nodes.empty()) {
    std::vector<int> test_labels;
    for (int v : test_nodes) test_labels.push_back(g.labels()[static_cast<std::size_t>(v)]);
    Mat test_post = query_posteriors(handle, g, test_nodes, query_prompt);
    handle.test_acc = accuracy(argmax_rows(test_post), test_labels);
  }
  return handle;
}

}  // namespace proia
