#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "proia/defense.hpp"
#include "proia/graph.hpp"
#include "proia/victim.hpp"

namespace proia {

enum class RowSource { shadow_train, shadow_test, target_train, target_test };

inline const char* row_source_name(RowSource s) {
  switch (s) {
    case RowSource::shadow_train: return "shadow_train";
    case RowSource::shadow_test: return "shadow_test";
    case RowSource::target_train: return "target_train";
    case RowSource::target_test: return "target_test";
  }
  return "?";
}

struct AttackDataset {
  Mat rows;                        // one example per row (posterior [+ prompt])
  std::vector<int> labels;         // membership bit or sensitive class
  std::vector<RowSource> source;
  std::vector<int> node;           // original node index
  std::vector<int> train_rows;     // row indices of the attack-train split
  std::vector<int> test_rows;
  bool degenerate = false;         // flagged instead of thrown (e.g. empty test)

  int size() const { return static_cast<int>(labels.size()); }

  int num_label_classes() const {
    int c = 0;
    for (int y : labels) c = std::max(c, y + 1);
    return c;
  }

  void validate() const {
    require(rows.rows() == static_cast<Eigen::Index>(labels.size()),
            "AttackDataset: rows/labels mismatch");
    require(labels.size() == source.size() && labels.size() == node.size(),
            "AttackDataset: metadata length mismatch");
    for (int r : train_rows) require(r >= 0 && r < size(), "AttackDataset: bad train row");
    for (int r : test_rows) require(r >= 0 && r < size(), "AttackDataset: bad test row");
  }
};

namespace attack_detail {

// Queries the victim with the defense (if any) applied to the posteriors or
// the query-side neighborhoods. `tag` keeps the noise streams of distinct
// query pools independent while staying derivable from the defense seed.
inline Mat defended_posteriors(const ModelHandle& m, const Graph& g,
                               const std::vector<int>& nodes,
                               const std::optional<PromptFeature>& prompt,
                               const DefenseSpec* defense, const char* tag) {
  if (defense == nullptr || defense->kind == DefenseKind::none) {
    return query_posteriors(m, g, nodes, prompt);
  }
  defense->validate();
  const std::uint64_t seed = derive_seed(defense->seed, tag);
  if (defense->kind == DefenseKind::neighb) {
    NeighborOverride ov = neighb_perturb(g, nodes, defense->perturb_rate, seed);
    return query_posteriors(m, g, nodes, prompt, &ov);
  }
  Mat post = query_posteriors(m, g, nodes, prompt);
  return vandp_noise(post, defense->budget, seed);
}

inline void append_block(AttackDataset& ds, std::vector<Mat>& blocks, const Mat& post,
                         const std::vector<int>& nodes, RowSource src, int fill_label,
                         const std::vector<int>* labels = nullptr) {
  blocks.push_back(post);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    ds.node.push_back(nodes[i]);
    ds.source.push_back(src);
    ds.labels.push_back(labels != nullptr ? (*labels)[i] : fill_label);
  }
}

inline Mat vstack(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const Mat& b : blocks) {
    rows += b.rows();
    cols = std::max(cols, b.cols());
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Mat& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

// Optionally append each node's prompt vector to its posterior row.
inline Mat with_prompt_columns(const Mat& post, const std::vector<int>& nodes,
                               const std::optional<PromptFeature>& prompt, bool append) {
  if (!append || !prompt.has_value()) return post;
  Mat out(post.rows(), post.cols() + prompt->p.cols());
  out.leftCols(post.cols()) = post;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)).tail(prompt->p.cols()) = prompt->p.row(nodes[i]);
  }
  return out;
}

}  // namespace attack_detail

// MIA dataset: attack-train = shadow posteriors on shadow pools (member=1 for
// shadow_train), attack-test = target posteriors on target pools. The defense,
// if any, applies to every victim query: the target sits behind it when
// deployed, and the adversary simulates it on the shadow so attack-train rows
// match the defended query distribution.
inline AttackDataset build_mia_dataset(const ModelHandle& shadow, const ModelHandle& target,
                                       const Graph& g, const NodeSplit& split,
                                       const std::optional<PromptFeature>& prompt,
                                       bool append_prompt = false,
                                       const DefenseSpec* defense = nullptr) {
  split.validate(g.node_count(), true);
  require(!split.shadow_train.empty() && !split.shadow_test.empty(),
          "build_mia_dataset: empty shadow pools");

  using attack_detail::defended_posteriors;
  using attack_detail::with_prompt_columns;

  AttackDataset ds;
  std::vector<Mat> blocks;
  // Rows ordered by (source, node index); pools are already sorted.
  Mat sh_tr = with_prompt_columns(
      defended_posteriors(shadow, g, split.shadow_train, prompt, defense, "shadow-train"),
      split.shadow_train, prompt, append_prompt);
  Mat sh_te = with_prompt_columns(
      defended_posteriors(shadow, g, split.shadow_test, prompt, defense, "shadow-test"),
      split.shadow_test, prompt, append_prompt);
  Mat tg_tr = with_prompt_columns(
      defended_posteriors(target, g, split.target_train, prompt, defense, "target-train"),
      split.target_train, prompt, append_prompt);
  Mat tg_te = with_prompt_columns(
      defended_posteriors(target, g, split.target_test, prompt, defense, "target-test"),
      split.target_test, prompt, append_prompt);

  attack_detail::append_block(ds, blocks, sh_tr, split.shadow_train, RowSource::shadow_train, 1);
  attack_detail::append_block(ds, blocks, sh_te, split.shadow_test, RowSource::shadow_test, 0);
  attack_detail::append_block(ds, blocks, tg_tr, split.target_train, RowSource::target_train, 1);
  attack_detail::append_block(ds, blocks, tg_te, split.target_test, RowSource::target_test, 0);
  ds.rows = attack_detail::vstack(blocks);

  const int n_train = static_cast<int>(split.shadow_train.size() + split.shadow_test.size());
  for (int i = 0; i < ds.size(); ++i) {
    (i < n_train ? ds.train_rows : ds.test_rows).push_back(i);
  }
  ds.degenerate = ds.test_rows.empty();
  ds.validate();
  return ds;
}

// AIA dataset: target posteriors on the adversary's labeled pool (train) and
// the held-out pool (test); labels are the sensitive attribute.
inline AttackDataset build_aia_dataset(const ModelHandle& target, const Graph& g,
                                       const NodeSplit& split,
                                       const std::optional<PromptFeature>& prompt,
                                       bool append_prompt = false,
                                       const DefenseSpec* defense = nullptr) {
  require(g.sensitive().has_value(), "build_aia_dataset: graph has no sensitive attribute");
  split.validate(g.node_count(), false);
  require(!split.attack_train.empty(), "build_aia_dataset: empty adversary pool");

  const std::vector<int>& sens = *g.sensitive();
  auto sens_of = [&](const std::vector<int>& nodes) {
    std::vector<int> out;
    for (int v : nodes) out.push_back(sens[static_cast<std::size_t>(v)]);
    return out;
  };

  AttackDataset ds;
  std::vector<Mat> blocks;
  Mat tr = attack_detail::with_prompt_columns(
      attack_detail::defended_posteriors(target, g, split.attack_train, prompt, defense,
                                         "adv-train"),
      split.attack_train, prompt, append_prompt);
  std::vector<int> tr_labels = sens_of(split.attack_train);
  attack_detail::append_block(ds, blocks, tr, split.attack_train, RowSource::target_train, -1,
                              &tr_labels);
  if (!split.attack_test.empty()) {
    Mat te = attack_detail::with_prompt_columns(
        attack_detail::defended_posteriors(target, g, split.attack_test, prompt, defense,
                                           "adv-test"),
        split.attack_test, prompt, append_prompt);
    std::vector<int> te_labels = sens_of(split.attack_test);
    attack_detail::append_block(ds, blocks, te, split.attack_test, RowSource::target_test, -1,
                                &te_labels);
  }
  ds.rows = attack_detail::vstack(blocks);

  const int n_train = static_cast<int>(split.attack_train.size());
  for (int i = 0; i < ds.size(); ++i) {
    (i < n_train ? ds.train_rows : ds.test_rows).push_back(i);
  }
  ds.degenerate = ds.test_rows.empty();
  ds.validate();
  return ds;
}

// CSV persistence: header origin,node,label,f0..fK.
inline void write_attack_csv(const AttackDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "write_attack_csv: cannot open " + path.string());
  out << "origin,node,label";
  for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) out << ",f" << j;
  out << "\n";
  out.precision(17);
  for (int i = 0; i < ds.size(); ++i) {
    out << row_source_name(ds.source[static_cast<std::size_t>(i)]) << ","
        << ds.node[static_cast<std::size_t>(i)] << "," << ds.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) out << "," << ds.rows(i, j);
    out << "\n";
  }
}

}  // namespace proia
