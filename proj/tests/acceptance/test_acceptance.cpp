// Acceptance suite: one criterion per test, each printing a single
// "[ACCEPTANCE] C<n> <name>: PASS/FAIL (...)" line with the measured numbers.
// Benchmark configs are loaded from the checked-in configs/ directory so the
// CLI and this suite exercise identical settings.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "proia/experiment.hpp"

namespace proia {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, args...);
  return std::string(buf);
}

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[ACCEPTANCE] C%d %s: %s%s%s%s\n", id, name, pass ? "PASS" : "FAIL",
              detail.empty() ? "" : " (", detail.c_str(), detail.empty() ? "" : ")");
  std::fflush(stdout);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path accept_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "proia_acceptance";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

ExperimentConfig benchmark_config(const char* file) {
  return parse_config_file(fs::path(PROIA_CONFIG_DIR) / file);
}

// The undefended vanilla MIA benchmark run is shared by C4, C6 and C9.
const ExperimentReport& overfit_mia_vanilla() {
  static const ExperimentReport rep = [] {
    ExperimentConfig cfg = benchmark_config("overfit300.cfg");
    cfg.out = (accept_dir() / "overfit_mia_vanilla").string();
    return run_experiment(cfg);
  }();
  return rep;
}

// ---------------------------------------------------------------------------
// C1: brute-force oracles.

double jaccard_ref(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  std::set<int> sa, sb;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a(k) != 0.0) sa.insert(static_cast<int>(k));
  }
  for (Eigen::Index k = 0; k < b.size(); ++k) {
    if (b(k) != 0.0) sb.insert(static_cast<int>(k));
  }
  std::set<int> un = sa;
  un.insert(sb.begin(), sb.end());
  if (un.empty()) return 0.0;
  int inter = 0;
  for (int k : sa) inter += sb.count(k) ? 1 : 0;
  return static_cast<double>(inter) / static_cast<double>(un.size());
}

// Frontier-set BFS over the raw edge list, independent of Graph adjacency.
std::vector<int> khop_ref(int n, const std::vector<std::pair<int, int>>& edges, int v, int k) {
  (void)n;
  std::set<int> seen{v}, frontier{v};
  for (int hop = 0; hop < k && !frontier.empty(); ++hop) {
    std::set<int> next;
    for (const auto& [a, b] : edges) {
      if (frontier.count(a) && !seen.count(b)) next.insert(b);
      if (frontier.count(b) && !seen.count(a)) next.insert(a);
    }
    seen.insert(next.begin(), next.end());
    frontier = next;
  }
  return std::vector<int>(seen.begin(), seen.end());
}

// O(pos*neg) pair counting with 1/2 credit for ties.
double auc_ref(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, cnt = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      cnt += 1.0;
    }
  }
  return num / cnt;
}

// Per-class precision/recall computed with independent passes.
double f1_ref(const std::vector<int>& pred, const std::vector<int>& truth, int num_classes) {
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    double support = 0.0, tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c) support += 1.0;
      if (pred[i] == c) predicted += 1.0;
      if (pred[i] == c && truth[i] == c) tp += 1.0;
    }
    if (support == 0.0) continue;
    const double prec = predicted > 0.0 ? tp / predicted : 0.0;
    const double rec = tp / support;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    total += f1 * support;
  }
  return total / static_cast<double>(truth.size());
}

TEST(Acceptance, C1OracleEquivalence) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int failures = 0;

  for (int trial = 0; trial < 1000; ++trial) {  // jaccard: exact match required
    const int d = 1 + rng.uniform_int(8);
    Eigen::RowVectorXd a(d), b(d);
    for (int k = 0; k < d; ++k) {
      a(k) = rng.bernoulli(0.5) ? rng.normal() : 0.0;
      b(k) = rng.bernoulli(0.5) ? rng.normal() : 0.0;
    }
    if (jaccard_similarity(a, b) != jaccard_ref(a, b)) ++failures;
  }

  for (int trial = 0; trial < 1000; ++trial) {  // khop: node set + induced edges
    const int n = 2 + rng.uniform_int(11);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng.bernoulli(0.3)) edges.emplace_back(i, j);
      }
    }
    Mat feats(n, 2);
    for (int i = 0; i < n; ++i) {
      feats(i, 0) = rng.normal();
      feats(i, 1) = rng.normal();
    }
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    Graph g(n, edges, feats, labels, std::nullopt);
    const int v = rng.uniform_int(n);
    const int k = rng.uniform_int(5);
    SubgraphResult sg = khop_subgraph(g, v, k);
    if (sg.original_index != khop_ref(n, edges, v, k)) {
      ++failures;
      continue;
    }
    std::multiset<std::pair<int, int>> got, want;
    for (const auto& [a, b] : sg.subgraph.edges()) {
      const int oa = sg.original_index[static_cast<std::size_t>(a)];
      const int ob = sg.original_index[static_cast<std::size_t>(b)];
      got.insert({std::min(oa, ob), std::max(oa, ob)});
    }
    std::set<int> inset(sg.original_index.begin(), sg.original_index.end());
    for (const auto& [a, b] : edges) {
      if (inset.count(a) && inset.count(b)) want.insert({std::min(a, b), std::max(a, b)});
    }
    if (got != want) ++failures;
  }

  for (int trial = 0; trial < 1000; ++trial) {  // auc: pair counting, ties at 1/2
    const int n = 2 + rng.uniform_int(39);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      // Mix a coarse grid (forces ties) with continuous scores.
      s[static_cast<std::size_t>(i)] =
          rng.bernoulli(0.5) ? 0.25 * rng.uniform_int(5) : rng.uniform01();
      y[static_cast<std::size_t>(i)] = rng.bernoulli(0.5) ? 1 : 0;
    }
    y[0] = 1;
    y[static_cast<std::size_t>(n - 1)] = 0;
    if (std::abs(auc_roc(s, y) - auc_ref(s, y)) > 1e-9) ++failures;
  }

  for (int trial = 0; trial < 1000; ++trial) {  // weighted F1
    const int num_classes = 1 + rng.uniform_int(5);
    const int n = 1 + rng.uniform_int(50);
    std::vector<int> pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pred[static_cast<std::size_t>(i)] = rng.uniform_int(num_classes);
      truth[static_cast<std::size_t>(i)] = rng.uniform_int(num_classes);
    }
    if (std::abs(weighted_f1(pred, truth, num_classes) - f1_ref(pred, truth, num_classes)) > 1e-9) {
      ++failures;
    }
  }

  const double dt = seconds_since(t0);
  const bool pass = failures == 0 && dt < 60.0;
  report(1, "oracle-equivalence", pass, fmt("failures=%d, %.1fs", failures, dt));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C2: finite-difference gradient checks for L_CL, L_IB and L_2.

AttackDataset toy_attack_dataset(int per_class, std::uint64_t seed) {
  Rng rng(seed);
  AttackDataset ds;
  ds.rows = Mat(2 * per_class, 2);
  int r = 0;
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      ds.rows(r, 0) = (cls == 0 ? 2.0 : -2.0) + 0.3 * rng.normal();
      ds.rows(r, 1) = (cls == 0 ? 1.0 : -1.0) + 0.3 * rng.normal();
      ds.labels.push_back(cls);
      ds.source.push_back(RowSource::shadow_train);
      ds.node.push_back(r);
      ds.train_rows.push_back(r);
      ++r;
    }
  }
  ds.validate();
  return ds;
}

TEST(Acceptance, C2GradientCorrectness) {
  const auto t0 = Clock::now();

  // L_CL (Eq 14) and L_IB (Eq 11) through the full pre-training objective on
  // a 6-node graph; every encoder parameter entry is perturbed centrally.
  SyntheticParams sp;
  sp.block_sizes = {3, 3};
  sp.feature_dim = 4;
  sp.num_classes = 2;
  sp.intra_p = 0.8;
  sp.inter_p = 0.3;
  Graph g = generate_synthetic(sp, 4);

  PretrainConfig pc;
  pc.layers = 2;
  pc.hidden_dim = 3;
  pc.beta_a = 0.05;
  pc.beta_m = 0.05;
  pc.alpha = 0.6;
  pc.threshold_t = 0.0;
  pc.bernoulli_q = 0.2;
  pc.sigma_fixed = 0.1;
  pc.seed = 31;

  Rng irng(8);
  EncoderParams params =
      init_encoder(g.feature_dim(), pc.hidden_dim, pc.layers, g.num_classes(), irng);
  const Graph sub = build_local_subgraph(g, pc.threshold_t);
  const Incidence inc = Incidence::build(g);

  auto objective = [&](EncoderParams& p, int which) {
    ad::Tape t;
    enc::EncoderVars ev = enc::lift(t, p, false);
    enc::EpochObjective obj = enc::pretrain_objective_tape(t, ev, g, sub, inc, pc, 0);
    return t.val(which == 0 ? obj.lcl : obj.lib)(0, 0);
  };

  double worst_pre = 0.0;
  for (int which : {0, 1}) {
    ad::Tape t;
    enc::EncoderVars ev = enc::lift(t, params, true);
    enc::EpochObjective obj = enc::pretrain_objective_tape(t, ev, g, sub, inc, pc, 0);
    t.backward(which == 0 ? obj.lcl : obj.lib);
    std::vector<Mat*> ptrs = params.trainable();
    std::vector<ad::Var> vars = ev.all();
    const double h = 1e-5;
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
      const Mat& grad = t.grad(vars[k]);
      for (Eigen::Index i = 0; i < ptrs[k]->rows(); ++i) {
        for (Eigen::Index j = 0; j < ptrs[k]->cols(); ++j) {
          const double orig = (*ptrs[k])(i, j);
          (*ptrs[k])(i, j) = orig + h;
          const double up = objective(params, which);
          (*ptrs[k])(i, j) = orig - h;
          const double dn = objective(params, which);
          (*ptrs[k])(i, j) = orig;
          const double fd = (up - dn) / (2.0 * h);
          const double rel =
              std::abs(fd - grad(i, j)) / std::max({std::abs(fd), std::abs(grad(i, j)), 1e-6});
          worst_pre = std::max(worst_pre, rel);
        }
      }
    }
  }

  // L_2 (Eq 19) through the attack head (8 rows, 2 channels).
  AttackDataset ds = toy_attack_dataset(4, 17);
  DisentangleConfig dc;
  dc.channels = 2;
  dc.embed_dim = 4;
  dc.routing_iters = 2;
  dc.depth = 2;
  dc.knn = 2;
  dc.lambda = 0.1;
  dc.seed = 33;
  dc.epochs = 0;
  AttackHead head = train_attack(ds, dc);
  head.b1 = Mat::Constant(1, dc.embed_dim, 0.25);  // keep relu off the kink

  std::vector<int> labels;
  for (int r : ds.train_rows) labels.push_back(ds.labels[static_cast<std::size_t>(r)]);
  const dis_detail::RoutingCsr csr = dis_detail::to_csr(head.train_nbrs);

  auto l2_of = [&](const AttackHead& h) {
    ad::Tape t;
    dis_detail::HeadVars v = dis_detail::lift_head(t, h, false);
    dis_detail::ForwardVars f = dis_detail::attack_forward_tape(
        t, v, dc, h.train_rows, h.train_gates, h.train_rows, h.train_gates, csr);
    return t.val(dis_detail::loss_attack_tape(t, f.pa_logits, f.qd_logits, labels, dc.lambda))(0, 0);
  };

  ad::Tape t;
  dis_detail::HeadVars v = dis_detail::lift_head(t, head, true);
  dis_detail::ForwardVars f = dis_detail::attack_forward_tape(
      t, v, dc, head.train_rows, head.train_gates, head.train_rows, head.train_gates, csr);
  ad::Var loss = dis_detail::loss_attack_tape(t, f.pa_logits, f.qd_logits, labels, dc.lambda);
  t.backward(loss);
  std::vector<ad::Var> order = v.all();
  std::vector<Mat*> hparams = head.trainable();

  double worst_l2 = 0.0;
  const double h_step = 1e-5;
  for (std::size_t pi = 0; pi < hparams.size(); ++pi) {
    const Mat& grad = t.grad(order[pi]);
    for (Eigen::Index r = 0; r < hparams[pi]->rows(); ++r) {
      for (Eigen::Index c = 0; c < hparams[pi]->cols(); ++c) {
        const double orig = (*hparams[pi])(r, c);
        (*hparams[pi])(r, c) = orig + h_step;
        const double up = l2_of(head);
        (*hparams[pi])(r, c) = orig - h_step;
        const double dn = l2_of(head);
        (*hparams[pi])(r, c) = orig;
        const double fd = (up - dn) / (2.0 * h_step);
        const double rel =
            std::abs(fd - grad(r, c)) / std::max({std::abs(fd), std::abs(grad(r, c)), 1e-6});
        worst_l2 = std::max(worst_l2, rel);
      }
    }
  }

  const double dt = seconds_since(t0);
  const bool pass = worst_pre < 1e-4 && worst_l2 < 1e-4 && dt < 60.0;
  report(2, "gradient-correctness", pass,
         fmt("max_rel pretrain=%.2e, l2=%.2e, %.1fs", worst_pre, worst_l2, dt));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C3: normalization invariants across 1000 random parameterizations.

TEST(Acceptance, C3NormalizationInvariants) {
  Rng rng(77);
  int failures = 0;
  double min_kl = 0.0;

  for (int trial = 0; trial < 1000; ++trial) {
    {  // softmax rows (the op behind victim posteriors, p_A and q_d)
      const int r = 1 + rng.uniform_int(6), c = 2 + rng.uniform_int(6);
      Mat logits(r, c);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) logits(i, j) = 20.0 * (rng.uniform01() - 0.5);
      }
      ad::Tape t;
      Mat sm = t.val(t.row_softmax(t.constant(logits)));
      for (int i = 0; i < r; ++i) {
        if (std::abs(sm.row(i).sum() - 1.0) > 1e-6 || sm.row(i).minCoeff() < 0.0) ++failures;
      }
    }

    {  // segment softmax: the Eq 17 routing weights over a random CSR layout
      const int segs = 1 + rng.uniform_int(5);
      std::vector<int> offsets{0};
      for (int s = 0; s < segs; ++s) offsets.push_back(offsets.back() + rng.uniform_int(4));
      if (offsets.back() > 0) {
        Mat scores(offsets.back(), 1);
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          scores(i, 0) = 16.0 * (rng.uniform01() - 0.5);
        }
        ad::Tape t;
        Mat alpha = t.val(t.segment_softmax(t.constant(scores), offsets));
        for (int s = 0; s < segs; ++s) {
          if (offsets[s] == offsets[s + 1]) continue;
          double sum = 0.0;
          for (int i = offsets[s]; i < offsets[s + 1]; ++i) {
            sum += alpha(i, 0);
            if (alpha(i, 0) < 0.0) ++failures;
          }
          if (std::abs(sum - 1.0) > 1e-6) ++failures;
        }
      }
    }

    {  // channel slots (Eq 16) and routed d vectors (Eq 18) are unit norm
      const int din = 2 + rng.uniform_int(4), dout = 1 + rng.uniform_int(4);
      Vec gate(din), h(din), bk(dout);
      Mat Wk(din, dout);
      for (int i = 0; i < din; ++i) {
        gate(i) = rng.normal();
        h(i) = rng.normal();
        for (int j = 0; j < dout; ++j) Wk(i, j) = rng.normal();
      }
      for (int j = 0; j < dout; ++j) bk(j) = rng.normal();
      const ChannelActivation act =
          rng.bernoulli(0.5) ? ChannelActivation::tanh_act : ChannelActivation::identity;
      Vec slot = channel_slot(gate, h, Wk, bk, act);
      if (std::abs(slot.norm() - 1.0) > 1e-6) ++failures;

      Vec z(dout), zhat(dout);
      for (int j = 0; j < dout; ++j) {
        z(j) = rng.normal();
        zhat(j) = rng.normal();
      }
      if (std::abs(update_rep(z, zhat).norm() - 1.0) > 1e-6) ++failures;
    }

    {  // KL terms are nonnegative
      const int r = 1 + rng.uniform_int(4), c = 1 + rng.uniform_int(4);
      Mat mu(r, c), logvar(r, c);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
          mu(i, j) = rng.normal(0.0, 2.0);
          logvar(i, j) = 6.0 * (rng.uniform01() - 0.5);
        }
      }
      const double kl = gaussian_kl_std(mu, logvar);
      min_kl = std::min(min_kl, kl);
      if (kl < -1e-9) ++failures;

      const int cc = 2 + rng.uniform_int(4);
      Mat p(r, cc), q(r, cc);
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < cc; ++j) {
          p(i, j) = std::abs(rng.normal()) + 1e-3;
          q(i, j) = std::abs(rng.normal()) + 1e-3;
        }
        p.row(i) /= p.row(i).sum();
        q.row(i) /= q.row(i).sum();
      }
      Vec klr = kl_rows(p, q);
      for (Eigen::Index i = 0; i < klr.size(); ++i) {
        min_kl = std::min(min_kl, klr(i));
        if (klr(i) < -1e-9) ++failures;
      }

      LatentState st;
      st.mu.push_back(mu);
      st.logvar.push_back(logvar);
      Mat phi(1 + rng.uniform_int(6), 1);
      for (Eigen::Index i = 0; i < phi.rows(); ++i) phi(i, 0) = rng.uniform01();
      st.phi.push_back(phi);
      const double la = loss_attribute_kl(st);
      const double lm = loss_membership_kl(st, 0.05 + rng.uniform01());
      min_kl = std::min({min_kl, la, lm});
      if (la < -1e-9 || lm < -1e-9) ++failures;
    }

    if (trial % 100 == 0) {  // end-to-end: real victim posteriors, real q_d rows
      SyntheticParams vsp;
      vsp.block_sizes = {6, 6};
      vsp.feature_dim = 5;
      vsp.num_classes = 2 + rng.uniform_int(2);
      vsp.intra_p = 0.4;
      vsp.inter_p = 0.1;
      Graph vg = generate_synthetic(vsp, 1000 + static_cast<std::uint64_t>(trial));
      BackboneSpec bs;
      bs.layers = 1 + rng.uniform_int(2);
      bs.hidden_dim = 4 + rng.uniform_int(5);
      bs.learning_rate = 0.05;
      bs.epochs = rng.uniform_int(3);
      std::vector<int> tr{0, 1, 2, 3, 4, 5}, te{6, 7, 8, 9, 10, 11};
      ModelHandle m = train_victim(vg, tr, te, bs, std::nullopt,
                                   500 + static_cast<std::uint64_t>(trial));
      std::vector<int> all_nodes(static_cast<std::size_t>(vg.node_count()));
      for (int i = 0; i < vg.node_count(); ++i) all_nodes[static_cast<std::size_t>(i)] = i;
      Mat post = query_posteriors(m, vg, all_nodes, std::nullopt);
      for (Eigen::Index i = 0; i < post.rows(); ++i) {
        if (std::abs(post.row(i).sum() - 1.0) > 1e-6 || post.row(i).minCoeff() < 0.0) ++failures;
      }

      AttackDataset tds = toy_attack_dataset(4 + rng.uniform_int(4),
                                             2000 + static_cast<std::uint64_t>(trial));
      DisentangleConfig dcfg;
      dcfg.channels = 1 + rng.uniform_int(3);
      dcfg.embed_dim = dcfg.channels * (2 + rng.uniform_int(3));
      dcfg.routing_iters = 1 + rng.uniform_int(3);
      dcfg.depth = 1 + rng.uniform_int(3);
      dcfg.knn = 2;
      dcfg.epochs = rng.uniform_int(3);
      dcfg.seed = 3000 + static_cast<std::uint64_t>(trial);
      AttackHead head = train_attack(tds, dcfg);
      Mat probe(5, 2);
      for (Eigen::Index i = 0; i < probe.rows(); ++i) {
        probe(i, 0) = 2.0 * rng.normal();
        probe(i, 1) = 2.0 * rng.normal();
      }
      dis_detail::EvalResult ev = attack_eval(head, probe);
      for (Eigen::Index i = 0; i < probe.rows(); ++i) {
        if (std::abs(ev.p_a.row(i).sum() - 1.0) > 1e-6) ++failures;
        if (std::abs(ev.q_d.row(i).sum() - 1.0) > 1e-6) ++failures;
        if (std::abs(ev.dtilde.row(i).norm() - 1.0) > 1e-6) ++failures;
      }
    }
  }

  const bool pass = failures == 0;
  report(3, "normalization-invariants", pass, fmt("failures=%d, min_kl=%.1e", failures, min_kl));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C4: overfit-regime pipeline sanity (vanilla MIA AUC, AIA vs majority).

TEST(Acceptance, C4PipelineSanity) {
  const auto t0 = Clock::now();
  const ExperimentReport& mia = overfit_mia_vanilla();
  const double mia_auc = mia.mean_test_auc.value_or(0.0);

  ExperimentConfig cfg = benchmark_config("overfit300.cfg");
  cfg.attack = AttackKind::aia;
  cfg.out = (accept_dir() / "overfit_aia_vanilla").string();
  ExperimentReport aia = run_experiment(cfg);
  double majority = 0.0;
  int ok_seeds = 0;
  for (const SeedMetrics& s : aia.seeds) {
    if (!s.ok) continue;
    majority += s.majority_rate;
    ++ok_seeds;
  }
  majority /= std::max(ok_seeds, 1);
  const double margin = aia.mean_test_acc - majority;

  const double dt = seconds_since(t0);
  const bool pass = !mia.partial && mia.mean_test_auc.has_value() && !aia.partial &&
                    mia_auc > 0.65 && margin >= 0.10 && dt < 300.0;
  report(4, "pipeline-sanity", pass,
         fmt("mia_auc=%.4f, aia_acc=%.4f, majority=%.4f, %.0fs", mia_auc, aia.mean_test_acc,
             majority, dt));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C5: directional improvement on the Cora-scale benchmark.

TEST(Acceptance, C5DirectionalImprovement) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg = benchmark_config("cora_scale.cfg");
  cfg.out = (accept_dir() / "cora_vanilla").string();
  ExperimentReport vanilla = run_experiment(cfg);
  cfg.variant = Variant::full;
  cfg.out = (accept_dir() / "cora_full").string();
  ExperimentReport full = run_experiment(cfg);

  const double dt = seconds_since(t0);
  const bool pass = !vanilla.partial && !full.partial &&
                    full.mean_test_acc >= vanilla.mean_test_acc && full.mean_test_acc >= 0.75 &&
                    dt < 900.0;
  report(5, "directional-improvement", pass,
         fmt("full_acc=%.4f, vanilla_acc=%.4f, %.0fs", full.mean_test_acc, vanilla.mean_test_acc,
             dt));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C6: vandp reduces vanilla AUC; defended full stays above defended vanilla.

TEST(Acceptance, C6DefenseInteraction) {
  const ExperimentReport& base = overfit_mia_vanilla();
  const double base_auc = base.mean_test_auc.value_or(0.0);

  ExperimentConfig cfg = benchmark_config("overfit300.cfg");
  cfg.defense.kind = DefenseKind::vandp;
  cfg.defense.budget = 0.2;
  cfg.out = (accept_dir() / "overfit_mia_vanilla_vandp").string();
  ExperimentReport dv = run_experiment(cfg);
  cfg.variant = Variant::full;
  cfg.out = (accept_dir() / "overfit_mia_full_vandp").string();
  ExperimentReport df = run_experiment(cfg);

  const double dv_auc = dv.mean_test_auc.value_or(1.0);
  const double df_auc = df.mean_test_auc.value_or(0.0);
  const double drop = base_auc - dv_auc;
  const bool pass = !base.partial && !dv.partial && !df.partial &&
                    base.mean_test_auc.has_value() && dv.mean_test_auc.has_value() &&
                    df.mean_test_auc.has_value() && drop >= 0.03 && df_auc > dv_auc;
  report(6, "defense-interaction", pass,
         fmt("vanilla %.4f -> %.4f (drop %.4f), defended full %.4f", base_auc, dv_auc, drop,
             df_auc));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C7: all four variants run end-to-end and record distinct metrics.

TEST(Acceptance, C7AblationWiring) {
  ExperimentConfig cfg = benchmark_config("quick.cfg");
  const Variant variants[] = {Variant::vanilla, Variant::pretrain_only, Variant::disentangle_only,
                              Variant::full};
  std::map<std::string, std::string> metrics;
  bool all_ok = true;
  for (Variant v : variants) {
    cfg.variant = v;
    cfg.out = (accept_dir() / (std::string("quick_") + variant_name(v))).string();
    ExperimentReport rep = run_experiment(cfg);
    all_ok = all_ok && !rep.partial;
    metrics[variant_name(v)] = slurp(fs::path(rep.out_dir) / "metrics.json");
    all_ok = all_ok && !metrics[variant_name(v)].empty();
  }
  bool distinct = true;
  for (auto a = metrics.begin(); a != metrics.end(); ++a) {
    for (auto b = std::next(a); b != metrics.end(); ++b) {
      if (a->second == b->second) distinct = false;
    }
  }
  const bool pass = all_ok && distinct;
  report(7, "ablation-wiring", pass,
         fmt("variants=%d, all_ok=%d, distinct=%d", 4, all_ok ? 1 : 0, distinct ? 1 : 0));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C8: identical config + seeds => byte-identical metrics JSON.

TEST(Acceptance, C8Determinism) {
  ExperimentConfig cfg = benchmark_config("quick.cfg");
  cfg.variant = Variant::full;  // exercises pretrain, prompts and the routed head
  cfg.out = (accept_dir() / "quick_rerun").string();
  ExperimentReport r1 = run_experiment(cfg);
  const std::string first = slurp(fs::path(r1.out_dir) / "metrics.json");
  ExperimentReport r2 = run_experiment(cfg);
  const std::string second = slurp(fs::path(r2.out_dir) / "metrics.json");

  const bool pass = !r1.partial && !r2.partial && !first.empty() && first == second;
  report(8, "determinism", pass, fmt("bytes=%zu, identical=%d", first.size(), pass ? 1 : 0));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// C9: every MIA run emits a six-axis radar CSV with values in [0,1].

TEST(Acceptance, C9RadarArtifact) {
  const ExperimentReport& mia = overfit_mia_vanilla();
  const std::vector<std::string> axes = {"target_train_acc", "target_test_acc",
                                         "shadow_train_acc", "shadow_test_acc",
                                         "attack_tn_rate",   "attack_tp_rate"};
  bool pass = !mia.seeds.empty();
  int files = 0;
  for (std::size_t k = 0; k < mia.seeds.size(); ++k) {
    const fs::path p = fs::path(mia.out_dir) / ("radar_seed" + std::to_string(k) + ".csv");
    std::ifstream in(p);
    if (!in) {
      pass = false;
      continue;
    }
    ++files;
    std::string line;
    std::getline(in, line);
    if (line != "axis,value") pass = false;
    for (const std::string& axis : axes) {
      if (!std::getline(in, line)) {
        pass = false;
        break;
      }
      const std::size_t comma = line.find(',');
      if (comma == std::string::npos || line.substr(0, comma) != axis) {
        pass = false;
        break;
      }
      const double v = std::stod(line.substr(comma + 1));
      if (!(v >= 0.0 && v <= 1.0)) pass = false;
    }
    if (std::getline(in, line) && !line.empty()) pass = false;  // exactly six axes
  }
  report(9, "radar-artifact", pass, fmt("files=%d of %zu", files, mia.seeds.size()));
  EXPECT_TRUE(pass);
}

}  // namespace
}  // namespace proia
