#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "proia/graph.hpp"
#include "proia/rng.hpp"

namespace proia {

// Stochastic-block-model generator with class-conditional binary features.
// Sensitive attribute, when planted, is the block id.
struct SyntheticParams {
  std::vector<int> block_sizes{150, 150};
  double intra_p = 0.2;
  double inter_p = 0.02;
  int feature_dim = 32;
  int num_classes = 2;
  bool plant_sensitive = true;
  // Per-block class distribution skew: block b prefers class (b mod C) with
  // this probability mass; the rest is spread uniformly.
  double class_skew = 0.6;
  double feature_on_p = 0.3;    // activation rate on a node's class signature dims
  double feature_off_p = 0.05;  // activation rate elsewhere
  double label_noise = 0.0;     // fraction of labels resampled uniformly
  // When >= 0, sample exactly this many edges (intra share given by intra_p
  // weighting) instead of independent pair coins.
  long exact_edges = -1;
};

struct SplitFractions {
  double target_pool = 0.4;
  double shadow_pool = 0.4;
  double train_ratio = 0.5;      // within each pool
  double aia_train = 0.5;        // adversary-labeled share of all nodes

  void validate() const {
    require(target_pool > 0.0 && target_pool < 1.0, "split: target_pool out of (0,1)");
    require(shadow_pool > 0.0 && shadow_pool < 1.0, "split: shadow_pool out of (0,1)");
    require(target_pool + shadow_pool <= 1.0, "split: pools exceed node budget");
    require(train_ratio > 0.0 && train_ratio < 1.0, "split: train_ratio out of (0,1)");
    require(aia_train > 0.0 && aia_train < 1.0, "split: aia_train out of (0,1)");
  }
};

struct DatasetSpec {
  std::string name = "synthetic";
  std::string source_dir;  // empty -> synthetic generator
  std::optional<SyntheticParams> synth = SyntheticParams{};
  SplitFractions split;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("dataset: cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

inline int parse_int(const std::string& s, const char* where) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("dataset: bad integer '") + s + "' in " + where);
  }
  if (pos != s.size())
    throw std::runtime_error(std::string("dataset: bad integer '") + s + "' in " + where);
  return v;
}

inline double parse_double(const std::string& s, const char* where) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("dataset: bad number '") + s + "' in " + where);
  }
  if (pos != s.size())
    throw std::runtime_error(std::string("dataset: bad number '") + s + "' in " + where);
  return v;
}

}  // namespace detail

// Directory layout: edges.tsv ("i<TAB>j" per line, i<j), features.tsv (one
// tab-separated row per node), labels.tsv, optional sensitive.tsv.
inline Graph load_graph_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto lines_feat = detail::read_lines(dir / "features.tsv");
  if (lines_feat.empty()) throw std::runtime_error("dataset: empty features.tsv");
  const int n = static_cast<int>(lines_feat.size());
  const int d = static_cast<int>(detail::split_fields(lines_feat[0], '\t').size());
  Mat feats(n, d);
  for (int i = 0; i < n; ++i) {
    const auto fields = detail::split_fields(lines_feat[static_cast<std::size_t>(i)], '\t');
    if (static_cast<int>(fields.size()) != d) {
      throw std::runtime_error("dataset: inconsistent feature row width at row " +
                               std::to_string(i));
    }
    for (int j = 0; j < d; ++j) {
      feats(i, j) = detail::parse_double(fields[static_cast<std::size_t>(j)], "features.tsv");
    }
  }

  const auto lines_lab = detail::read_lines(dir / "labels.tsv");
  if (static_cast<int>(lines_lab.size()) != n) {
    throw std::runtime_error("dataset: labels.tsv row count != features.tsv row count");
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(i)] =
        detail::parse_int(lines_lab[static_cast<std::size_t>(i)], "labels.tsv");

  const auto lines_edge = detail::read_lines(dir / "edges.tsv");
  if (lines_edge.empty()) throw std::runtime_error("dataset: empty edges.tsv");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(lines_edge.size());
  for (const auto& line : lines_edge) {
    const auto fields = detail::split_fields(line, '\t');
    if (fields.size() != 2) throw std::runtime_error("dataset: malformed edge line: " + line);
    edges.emplace_back(detail::parse_int(fields[0], "edges.tsv"),
                       detail::parse_int(fields[1], "edges.tsv"));
  }

  std::optional<std::vector<int>> sensitive;
  if (fs::exists(dir / "sensitive.tsv")) {
    const auto lines_sen = detail::read_lines(dir / "sensitive.tsv");
    if (static_cast<int>(lines_sen.size()) != n) {
      throw std::runtime_error("dataset: sensitive.tsv row count != node count");
    }
    sensitive.emplace(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      (*sensitive)[static_cast<std::size_t>(i)] =
          detail::parse_int(lines_sen[static_cast<std::size_t>(i)], "sensitive.tsv");
    }
  }
  return Graph(n, std::move(edges), std::move(feats), std::move(labels), std::move(sensitive));
}

inline void write_graph_files(const Graph& g, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (const auto& [a, b] : g.edges()) out << a << '\t' << b << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    for (int i = 0; i < g.node_count(); ++i) {
      for (int j = 0; j < g.feature_dim(); ++j) {
        if (j) out << '\t';
        out << g.features()(i, j);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.tsv");
    for (int y : g.labels()) out << y << '\n';
  }
  if (g.sensitive()) {
    std::ofstream out(dir / "sensitive.tsv");
    for (int s : *g.sensitive()) out << s << '\n';
  }
}

inline Graph generate_synthetic(const SyntheticParams& p, std::uint64_t seed) {
  require(!p.block_sizes.empty(), "synthetic: need at least one block");
  require(p.intra_p >= 0.0 && p.intra_p <= 1.0, "synthetic: intra_p out of [0,1]");
  require(p.inter_p >= 0.0 && p.inter_p <= 1.0, "synthetic: inter_p out of [0,1]");
  require(p.num_classes >= 2, "synthetic: need >= 2 classes");
  Rng rng(seed);
  int n = 0;
  std::vector<int> block_of;
  for (std::size_t b = 0; b < p.block_sizes.size(); ++b) {
    require(p.block_sizes[b] > 0, "synthetic: block size must be positive");
    for (int i = 0; i < p.block_sizes[b]; ++i) block_of.push_back(static_cast<int>(b));
    n += p.block_sizes[b];
  }

  // Labels: each block skews toward class (block mod C).
  std::vector<int> labels(static_cast<std::size_t>(n));
  const int C = p.num_classes;
  for (int v = 0; v < n; ++v) {
    const int fav = block_of[static_cast<std::size_t>(v)] % C;
    if (rng.uniform01() < p.class_skew) {
      labels[static_cast<std::size_t>(v)] = fav;
    } else {
      labels[static_cast<std::size_t>(v)] = rng.uniform_int(C);
    }
  }
  if (p.label_noise > 0.0) {
    for (int v = 0; v < n; ++v) {
      if (rng.bernoulli(p.label_noise)) labels[static_cast<std::size_t>(v)] = rng.uniform_int(C);
    }
  }

  // Edges.
  std::vector<std::pair<int, int>> edges;
  if (p.exact_edges >= 0) {
    // Sample exactly exact_edges distinct pairs; intra_p acts as the intra
    // proportion. Deterministic given the seed.
    const double intra_share = p.intra_p / std::max(1e-12, p.intra_p + p.inter_p);
    std::set<std::pair<int, int>> chosen;
    long guard = 0;
    while (static_cast<long>(chosen.size()) < p.exact_edges && guard < p.exact_edges * 1000) {
      ++guard;
      int a = rng.uniform_int(n);
      int b = rng.uniform_int(n);
      if (a == b) continue;
      const bool same = block_of[static_cast<std::size_t>(a)] == block_of[static_cast<std::size_t>(b)];
      const bool want_intra = rng.uniform01() < intra_share;
      if (same != want_intra) continue;
      if (a > b) std::swap(a, b);
      chosen.emplace(a, b);
    }
    edges.assign(chosen.begin(), chosen.end());
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double pe = block_of[static_cast<std::size_t>(i)] == block_of[static_cast<std::size_t>(j)]
                              ? p.intra_p
                              : p.inter_p;
        if (rng.bernoulli(pe)) edges.emplace_back(i, j);
      }
    }
  }

  // Class-conditional binary features: each class owns a contiguous slice of
  // signature dimensions.
  Mat feats = Mat::Zero(n, p.feature_dim);
  const int sig = std::max(1, p.feature_dim / C);
  for (int v = 0; v < n; ++v) {
    const int y = labels[static_cast<std::size_t>(v)];
    const int lo = y * sig;
    const int hi = std::min(p.feature_dim, lo + sig);
    for (int j = 0; j < p.feature_dim; ++j) {
      const double on = (j >= lo && j < hi) ? p.feature_on_p : p.feature_off_p;
      if (rng.bernoulli(on)) feats(v, j) = 1.0;
    }
  }

  std::optional<std::vector<int>> sensitive;
  if (p.plant_sensitive) sensitive = block_of;
  return Graph(n, std::move(edges), std::move(feats), std::move(labels), std::move(sensitive));
}

// Cora-scale stand-in: matches the Cora statistics (2708 nodes, 5278 edges,
// 1433 binary features, 7 classes) with a homophilous block structure, for
// use when the real files are not on disk.
inline SyntheticParams cora_scale_params() {
  SyntheticParams p;
  p.block_sizes = {387, 387, 387, 387, 387, 387, 386};
  p.intra_p = 0.81;  // intra share under exact-edge sampling
  p.inter_p = 0.19;
  p.feature_dim = 1433;
  p.num_classes = 7;
  p.plant_sensitive = false;
  p.class_skew = 0.85;
  p.feature_on_p = 0.035;
  p.feature_off_p = 0.006;
  p.label_noise = 0.08;
  p.exact_edges = 5278;
  return p;
}

// Deterministic pool split: 40/40/20 target/shadow/reserved by default, each
// pool cut by train_ratio; AIA pools partition all nodes by aia_train.
inline NodeSplit make_split(int node_count, const SplitFractions& f, std::uint64_t seed) {
  f.validate();
  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(node_count);
  const int n_target = static_cast<int>(f.target_pool * node_count);
  const int n_shadow = static_cast<int>(f.shadow_pool * node_count);
  const int n_target_train = static_cast<int>(f.train_ratio * n_target);
  const int n_shadow_train = static_cast<int>(f.train_ratio * n_shadow);

  NodeSplit s;
  int pos = 0;
  auto take = [&](int count) {
    std::vector<int> out(perm.begin() + pos, perm.begin() + pos + count);
    pos += count;
    std::sort(out.begin(), out.end());
    return out;
  };
  s.target_train = take(n_target_train);
  s.target_test = take(n_target - n_target_train);
  s.shadow_train = take(n_shadow_train);
  s.shadow_test = take(n_shadow - n_shadow_train);

  const std::vector<int> aia_perm = Rng(derive_seed(seed, "aia-pools")).permutation(node_count);
  const int n_aia_train = static_cast<int>(f.aia_train * node_count);
  s.attack_train.assign(aia_perm.begin(), aia_perm.begin() + n_aia_train);
  s.attack_test.assign(aia_perm.begin() + n_aia_train, aia_perm.end());
  std::sort(s.attack_train.begin(), s.attack_train.end());
  std::sort(s.attack_test.begin(), s.attack_test.end());
  s.validate(node_count, /*mia=*/true);
  return s;
}

struct LoadedDataset {
  Graph graph;
  NodeSplit split;
};

// Resolves the graph source (files or generator) and derives the node split.
// PROIA_DATA_DIR, when set, is the root for relative source directories.
// split_seed defaults to the dataset seed; the harness passes a per-run seed
// so the graph stays fixed while pools vary.
inline LoadedDataset load_dataset(const DatasetSpec& spec, std::uint64_t split_seed) {
  Graph g = [&]() {
    if (!spec.source_dir.empty()) {
      std::filesystem::path dir(spec.source_dir);
      if (dir.is_relative()) {
        if (const char* root = std::getenv("PROIA_DATA_DIR")) dir = std::filesystem::path(root) / dir;
      }
      return load_graph_files(dir);
    }
    require(spec.synth.has_value(), "dataset: no source_dir and no synthetic params");
    return generate_synthetic(*spec.synth, spec.seed);
  }();
  NodeSplit split = make_split(g.node_count(), spec.split, split_seed);
  return {std::move(g), std::move(split)};
}

inline LoadedDataset load_dataset(const DatasetSpec& spec) { return load_dataset(spec, spec.seed); }

}  // namespace proia
