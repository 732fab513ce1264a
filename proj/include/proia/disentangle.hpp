#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "proia/adam.hpp"
#include "proia/attack_data.hpp"
#include "proia/tape.hpp"

namespace proia {

enum class ChannelActivation { tanh_act, identity };

struct DisentangleConfig {
  int channels = 4;
  int routing_iters = 5;
  double tau = 1.0;
  double lambda = 0.1;
  int depth = 5;       // gate MLP layer count
  int embed_dim = 64;  // total disentangled width across channels
  int knn = 10;        // mutual-kNN degree for the routing structure
  double learning_rate = 0.01;
  int epochs = 100;
  std::uint64_t seed = 0;
  ChannelActivation activation = ChannelActivation::tanh_act;

  int channel_dim() const { return embed_dim / channels; }

  void validate() const {
    require(channels >= 1, "DisentangleConfig: channels must be positive");
    require(embed_dim >= channels && embed_dim % channels == 0,
            "DisentangleConfig: channels must divide embed_dim");
    require(routing_iters >= 1, "DisentangleConfig: routing_iters must be positive");
    require(tau > 0.0, "DisentangleConfig: tau must be positive");
    require(lambda >= 0.0, "DisentangleConfig: lambda must be nonnegative");
    require(depth >= 1, "DisentangleConfig: depth must be positive");
    require(knn >= 1, "DisentangleConfig: knn must be positive");
    require(learning_rate > 0.0, "DisentangleConfig: learning_rate must be positive");
    require(epochs >= 0, "DisentangleConfig: epochs must be nonnegative");
  }
};

namespace dis_detail {

inline Vec normalize_strict(const Vec& v, const char* who) {
  const double denom = v.norm() + 1e-12;
  if (denom < 1e-9) throw std::invalid_argument(std::string(who) + ": degenerate zero vector");
  return v / denom;
}

inline double activate(double x, ChannelActivation act) {
  return act == ChannelActivation::tanh_act ? std::tanh(x) : x;
}

}  // namespace dis_detail

// One channel slot: z = normalize(activation(W_k^T (gate ⊙ h) + b_k)).
inline Vec channel_slot(const Vec& gate, const Vec& h, const Mat& Wk, const Vec& bk,
                        ChannelActivation act) {
  require(gate.size() == h.size(), "channel_slot: gate/feature dimension mismatch");
  require(Wk.rows() == h.size(), "channel_slot: W_k row count mismatch");
  require(Wk.cols() == bk.size(), "channel_slot: b_k width mismatch");
  Vec pre = Wk.transpose() * gate.cwiseProduct(h) + bk;
  for (Eigen::Index i = 0; i < pre.size(); ++i) pre(i) = dis_detail::activate(pre(i), act);
  return dis_detail::normalize_strict(pre, "channel_slot");
}

// One routing step: ẑ = Σ_j softmax_j(z_j · center / τ) z_j over neighbor rows.
inline Vec routing_step(const Mat& neighbor_slots, const Vec& center, double tau) {
  require(tau > 0.0, "routing_step: tau must be positive");
  require(neighbor_slots.rows() > 0, "routing_step: empty neighbor set");
  require(neighbor_slots.cols() == center.size(), "routing_step: dimension mismatch");
  Vec sims = neighbor_slots * center / tau;
  const double mx = sims.maxCoeff();
  Vec w = (sims.array() - mx).exp();
  w /= w.sum();
  return neighbor_slots.transpose() * w;
}

// d = (z + ẑ) / ‖z + ẑ‖₂.
inline Vec update_rep(const Vec& z_i, const Vec& z_hat) {
  require(z_i.size() == z_hat.size(), "update_rep: dimension mismatch");
  return dis_detail::normalize_strict(z_i + z_hat, "update_rep");
}

// Full routing for one channel: neighbor slots stay fixed, each node's center
// starts at its own slot and is refined routing_iters times. Rows with no
// neighbors keep d = z_i.
inline Mat route_channel(const Mat& slots, const std::vector<std::vector<int>>& nbrs, int iters,
                         double tau) {
  require(static_cast<Eigen::Index>(nbrs.size()) == slots.rows(),
          "route_channel: neighbor list count mismatch");
  require(iters >= 1, "route_channel: iters must be positive");
  Mat d = slots;
  for (Eigen::Index i = 0; i < slots.rows(); ++i) {
    const std::vector<int>& J = nbrs[static_cast<std::size_t>(i)];
    if (J.empty()) continue;
    Mat nb(static_cast<Eigen::Index>(J.size()), slots.cols());
    for (std::size_t j = 0; j < J.size(); ++j) {
      require(J[j] >= 0 && J[j] < slots.rows(), "route_channel: neighbor index out of range");
      nb.row(static_cast<Eigen::Index>(j)) = slots.row(J[j]);
    }
    Vec center = slots.row(i).transpose();
    for (int t = 0; t < iters; ++t) {
      Vec zhat = routing_step(nb, center, tau);
      center = update_rep(slots.row(i).transpose(), zhat);
    }
    d.row(i) = center.transpose();
  }
  return d;
}

// Cosine top-k of each query row among base rows; ties break toward the lower
// base index. exclude_self skips base index == query index.
inline std::vector<std::vector<int>> topk_neighbors(const Mat& queries, const Mat& base, int k,
                                                    bool exclude_self) {
  require(queries.cols() == base.cols(), "topk_neighbors: dimension mismatch");
  auto normalized = [](const Mat& m) {
    Mat out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out.row(i) /= m.row(i).norm() + 1e-12;
    }
    return out;
  };
  Mat qn = normalized(queries);
  Mat bn = normalized(base);
  Mat sims = qn * bn.transpose();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(queries.rows()));
  if (k <= 0) return nbrs;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    std::vector<int> order(static_cast<std::size_t>(base.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (sims(i, a) != sims(i, b)) return sims(i, a) > sims(i, b);
      return a < b;
    });
    for (int j : order) {
      if (exclude_self && j == static_cast<int>(i)) continue;
      nbrs[static_cast<std::size_t>(i)].push_back(j);
      if (static_cast<int>(nbrs[static_cast<std::size_t>(i)].size()) == k) break;
    }
    std::sort(nbrs[static_cast<std::size_t>(i)].begin(), nbrs[static_cast<std::size_t>(i)].end());
  }
  return nbrs;
}

// Mutual kNN: an edge i-j survives only if each is in the other's top-k.
inline std::vector<std::vector<int>> mutual_knn(const Mat& rows, int k) {
  std::vector<std::vector<int>> top = topk_neighbors(rows, rows, k, true);
  std::vector<std::vector<int>> out(top.size());
  for (std::size_t i = 0; i < top.size(); ++i) {
    for (int j : top[i]) {
      const auto& back = top[static_cast<std::size_t>(j)];
      if (std::binary_search(back.begin(), back.end(), static_cast<int>(i))) {
        out[i].push_back(j);
      }
    }
  }
  return out;
}

// Per-row KL(P ‖ Q); zero-probability P entries contribute zero.
inline Vec kl_rows(const Mat& p, const Mat& q) {
  require(p.rows() == q.rows() && p.cols() == q.cols(), "kl_rows: shape mismatch");
  Vec out(p.rows());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double kl = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0.0) kl += p(i, j) * (std::log(p(i, j)) - std::log(q(i, j)));
    }
    out(i) = kl;
  }
  return out;
}

// L_2 = mean(−log p_A[y] − log q_d[y]) + λ · mean KL(P_A ‖ Q_d).
inline double loss_attack(const Mat& p_a, const Mat& q_d, const std::vector<int>& labels,
                          double lambda) {
  require(p_a.rows() == q_d.rows() && p_a.cols() == q_d.cols(), "loss_attack: shape mismatch");
  require(static_cast<Eigen::Index>(labels.size()) == p_a.rows(), "loss_attack: label count");
  require(lambda >= 0.0, "loss_attack: lambda must be nonnegative");
  for (Eigen::Index i = 0; i < p_a.rows(); ++i) {
    require(std::abs(p_a.row(i).sum() - 1.0) < 1e-6 && p_a.row(i).minCoeff() >= 0.0,
            "loss_attack: p_A row is not a distribution");
    require(std::abs(q_d.row(i).sum() - 1.0) < 1e-6 && q_d.row(i).minCoeff() >= 0.0,
            "loss_attack: q_d row is not a distribution");
  }
  double ce = 0.0;
  for (Eigen::Index i = 0; i < p_a.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < p_a.cols(), "loss_attack: label out of range");
    ce += -std::log(p_a(i, y)) - std::log(q_d(i, y));
  }
  ce /= static_cast<double>(p_a.rows());
  return ce + lambda * kl_rows(p_a, q_d).mean();
}

// The trained ProIA attack head. Train rows and their mutual-kNN structure are
// retained so unseen rows can route against the training set.
struct AttackHead {
  DisentangleConfig cfg;
  int classes = 0;
  int in_dim = 0;
  int gate_dim = 0;
  bool uses_prompt = false;
  std::vector<Mat> gate_W, gate_b;  // depth-layer gate MLP (gate_dim -> in_dim)
  std::vector<Mat> Wk, bk;          // per-channel slot maps
  Mat Wh;                           // feature projection into the d̃ space
  Mat W1, b1, W2, b2;               // attack classifier F_A
  Mat Wq, bq;                       // channel-posterior head q_d
  Mat train_rows, train_gates;
  std::vector<std::vector<int>> train_nbrs;
  std::vector<double> loss_curve;

  std::vector<Mat*> trainable() {
    std::vector<Mat*> out;
    for (Mat& m : gate_W) out.push_back(&m);
    for (Mat& m : gate_b) out.push_back(&m);
    for (Mat& m : Wk) out.push_back(&m);
    for (Mat& m : bk) out.push_back(&m);
    out.push_back(&Wh);
    out.push_back(&W1);
    out.push_back(&b1);
    out.push_back(&W2);
    out.push_back(&b2);
    out.push_back(&Wq);
    out.push_back(&bq);
    return out;
  }
};

namespace dis_detail {

using ad::Tape;
using ad::Var;

struct HeadVars {
  std::vector<Var> gate_W, gate_b, Wk, bk;
  Var Wh{nullptr, -1}, W1{nullptr, -1}, b1{nullptr, -1}, W2{nullptr, -1}, b2{nullptr, -1},
      Wq{nullptr, -1}, bq{nullptr, -1};

  std::vector<Var> all() const {  // mirrors AttackHead::trainable() order
    std::vector<Var> out;
    for (Var v : gate_W) out.push_back(v);
    for (Var v : gate_b) out.push_back(v);
    for (Var v : Wk) out.push_back(v);
    for (Var v : bk) out.push_back(v);
    out.insert(out.end(), {Wh, W1, b1, W2, b2, Wq, bq});
    return out;
  }
};

inline HeadVars lift_head(Tape& t, const AttackHead& head, bool trainable) {
  auto lift = [&](const Mat& m) { return t.leaf(m, trainable); };
  HeadVars v;
  for (const Mat& m : head.gate_W) v.gate_W.push_back(lift(m));
  for (const Mat& m : head.gate_b) v.gate_b.push_back(lift(m));
  for (const Mat& m : head.Wk) v.Wk.push_back(lift(m));
  for (const Mat& m : head.bk) v.bk.push_back(lift(m));
  v.Wh = lift(head.Wh);
  v.W1 = lift(head.W1);
  v.b1 = lift(head.b1);
  v.W2 = lift(head.W2);
  v.b2 = lift(head.b2);
  v.Wq = lift(head.Wq);
  v.bq = lift(head.bq);
  return v;
}

struct RoutingCsr {
  std::vector<int> dst, src, offsets;
};

inline RoutingCsr to_csr(const std::vector<std::vector<int>>& nbrs) {
  RoutingCsr c;
  c.offsets.push_back(0);
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    for (int j : nbrs[i]) {
      c.dst.push_back(static_cast<int>(i));
      c.src.push_back(j);
    }
    c.offsets.push_back(static_cast<int>(c.dst.size()));
  }
  return c;
}

// Gate MLP output ⊙ rows, then per-channel slot mapping (Eq 16, vectorized).
inline std::vector<Var> slots_tape(Tape& t, const HeadVars& v, const DisentangleConfig& cfg,
                                   Var rows, Var gates) {
  Var g = gates;
  for (std::size_t l = 0; l < v.gate_W.size(); ++l) {
    g = t.add_rowvec(t.matmul(g, v.gate_W[l]), v.gate_b[l]);
    if (l + 1 < v.gate_W.size()) g = t.tanh_(g);
  }
  Var m = t.cwise_mul(g, rows);
  std::vector<Var> slots;
  for (int k = 0; k < cfg.channels; ++k) {
    Var pre = t.add_rowvec(t.matmul(m, v.Wk[static_cast<std::size_t>(k)]),
                           v.bk[static_cast<std::size_t>(k)]);
    if (cfg.activation == ChannelActivation::tanh_act) pre = t.tanh_(pre);
    slots.push_back(t.l2_normalize_rows(pre));
  }
  return slots;
}

struct ForwardVars {
  Var pa_logits{nullptr, -1}, qd_logits{nullptr, -1}, dtilde{nullptr, -1};
  std::vector<Var> slots_eval, centers;
};

// Full head forward: slots for the evaluated rows and for the routing-source
// rows (identical matrices during training), routing per channel against the
// source slots, then the two posterior heads.
inline ForwardVars attack_forward_tape(Tape& t, const HeadVars& v, const DisentangleConfig& cfg,
                                       const Mat& rows_eval, const Mat& gates_eval,
                                       const Mat& rows_src, const Mat& gates_src,
                                       const RoutingCsr& csr) {
  Var he = t.constant(rows_eval);
  std::vector<Var> slots_eval = slots_tape(t, v, cfg, he, t.constant(gates_eval));
  std::vector<Var> slots_src = slots_tape(t, v, cfg, t.constant(rows_src), t.constant(gates_src));
  const int n = static_cast<int>(rows_eval.rows());

  ForwardVars out;
  out.slots_eval = slots_eval;
  for (int k = 0; k < cfg.channels; ++k) {
    Var zk = slots_eval[static_cast<std::size_t>(k)];
    Var sk = slots_src[static_cast<std::size_t>(k)];
    Var center = zk;
    for (int it = 0; it < cfg.routing_iters; ++it) {
      Var scores = t.scale(
          t.row_dot(t.gather_rows(sk, csr.src), t.gather_rows(center, csr.dst)), 1.0 / cfg.tau);
      Var alpha = t.segment_softmax(scores, csr.offsets);
      Var zhat = t.weighted_gather_sum(sk, csr.dst, csr.src, alpha, n);
      center = t.l2_normalize_rows(t.add(zk, zhat));
    }
    out.centers.push_back(center);
  }
  out.dtilde = t.l2_normalize_rows(t.concat_cols(out.centers));

  Var hproj = t.matmul(he, v.Wh);
  Var combined = t.cwise_mul(out.dtilde, hproj);
  Var hid = t.relu(t.add_rowvec(t.matmul(combined, v.W1), v.b1));
  out.pa_logits = t.add_rowvec(t.matmul(hid, v.W2), v.b2);
  out.qd_logits = t.add_rowvec(t.matmul(out.dtilde, v.Wq), v.bq);
  return out;
}

inline Var loss_attack_tape(Tape& t, Var pa_logits, Var qd_logits, const std::vector<int>& labels,
                            double lambda) {
  Var ce = t.add(t.cross_entropy_mean(pa_logits, labels), t.cross_entropy_mean(qd_logits, labels));
  if (lambda == 0.0) return ce;
  Var p = t.row_softmax(pa_logits);
  Var q = t.row_softmax(qd_logits);
  Var kl = t.mean_all(t.row_dot(p, t.sub(t.log_(p), t.log_(q))));
  return t.add(ce, t.scale(kl, lambda));
}

struct EvalResult {
  Mat p_a, q_d, dtilde;
};

inline EvalResult eval_with_structure(const AttackHead& head, const Mat& rows, const Mat& gates,
                                      const RoutingCsr& csr) {
  ad::Tape t;
  HeadVars v = lift_head(t, head, false);
  ForwardVars f = attack_forward_tape(t, v, head.cfg, rows, gates, head.train_rows,
                                      head.train_gates, csr);
  EvalResult r;
  r.p_a = t.val(t.row_softmax(f.pa_logits));
  r.q_d = t.val(t.row_softmax(f.qd_logits));
  r.dtilde = t.val(f.dtilde);
  return r;
}

}  // namespace dis_detail

inline AttackHead init_attack_head(const DisentangleConfig& cfg, int in_dim, int gate_dim,
                                   int classes, Rng& rng) {
  require(in_dim >= 1 && gate_dim >= 1 && classes >= 2, "init_attack_head: bad dimensions");
  AttackHead head;
  head.cfg = cfg;
  head.classes = classes;
  head.in_dim = in_dim;
  head.gate_dim = gate_dim;
  for (int l = 0; l < cfg.depth; ++l) {
    const int din = l == 0 ? gate_dim : in_dim;
    head.gate_W.push_back(detail::glorot(din, in_dim, rng));
    head.gate_b.push_back(Mat::Zero(1, in_dim));
  }
  for (int k = 0; k < cfg.channels; ++k) {
    head.Wk.push_back(detail::glorot(in_dim, cfg.channel_dim(), rng));
    head.bk.push_back(Mat::Zero(1, cfg.channel_dim()));
  }
  head.Wh = detail::glorot(in_dim, cfg.embed_dim, rng);
  head.W1 = detail::glorot(cfg.embed_dim, cfg.embed_dim, rng);
  head.b1 = Mat::Zero(1, cfg.embed_dim);
  head.W2 = detail::glorot(cfg.embed_dim, classes, rng);
  head.b2 = Mat::Zero(1, classes);
  head.Wq = detail::glorot(cfg.embed_dim, classes, rng);
  head.bq = Mat::Zero(1, classes);
  return head;
}

// Single-node forward from an already-routed representation (Eq 19 context):
// p_A = softmax(F_A(d̃ ⊙ W_h^T h)), q_d = softmax(W_q^T d̃ + b_q).
inline std::pair<Vec, Vec> attack_forward(const AttackHead& head, const Vec& dtilde,
                                          const Vec& h) {
  require(dtilde.size() == head.cfg.embed_dim, "attack_forward: d-tilde dimension mismatch");
  require(h.size() == head.in_dim, "attack_forward: feature dimension mismatch");
  auto softmax_vec = [](Vec z) {
    const double mx = z.maxCoeff();
    Vec e = (z.array() - mx).exp();
    return Vec(e / e.sum());
  };
  Vec combined = dtilde.cwiseProduct(head.Wh.transpose() * h);
  Vec hid = (head.W1.transpose() * combined + head.b1.transpose()).cwiseMax(0.0);
  Vec pa = softmax_vec(head.W2.transpose() * hid + head.b2.transpose());
  Vec qd = softmax_vec(head.Wq.transpose() * dtilde + head.bq.transpose());
  return {pa, qd};
}

inline AttackHead train_attack(const AttackDataset& ds, const DisentangleConfig& cfg,
                               const Mat* prompt_rows = nullptr) {
  cfg.validate();
  ds.validate();
  require(!ds.train_rows.empty(), "train_attack: empty train split");
  const int classes = ds.num_label_classes();
  require(classes >= 2, "train_attack: need at least two label classes");
  if (prompt_rows != nullptr) {
    require(prompt_rows->rows() == ds.rows.rows(), "train_attack: prompt rows misaligned");
  }

  const int ntr = static_cast<int>(ds.train_rows.size());
  Mat xtr(ntr, ds.rows.cols());
  std::vector<int> labels;
  for (int i = 0; i < ntr; ++i) {
    xtr.row(i) = ds.rows.row(ds.train_rows[static_cast<std::size_t>(i)]);
    labels.push_back(ds.labels[static_cast<std::size_t>(ds.train_rows[static_cast<std::size_t>(i)])]);
  }
  Mat gtr = xtr;
  if (prompt_rows != nullptr) {
    gtr = Mat(ntr, prompt_rows->cols());
    for (int i = 0; i < ntr; ++i) {
      gtr.row(i) = prompt_rows->row(ds.train_rows[static_cast<std::size_t>(i)]);
    }
  }

  Rng rng(derive_seed(cfg.seed, "attack-head"));
  AttackHead head = init_attack_head(cfg, static_cast<int>(ds.rows.cols()),
                                     static_cast<int>(gtr.cols()), classes, rng);
  head.uses_prompt = prompt_rows != nullptr;
  head.train_rows = xtr;
  head.train_gates = gtr;
  head.train_nbrs = mutual_knn(xtr, std::min(cfg.knn, ntr - 1));
  dis_detail::RoutingCsr csr = dis_detail::to_csr(head.train_nbrs);

  Adam opt(cfg.learning_rate);
  std::vector<Mat*> params = head.trainable();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape t;
    dis_detail::HeadVars v = dis_detail::lift_head(t, head, true);
    dis_detail::ForwardVars f =
        dis_detail::attack_forward_tape(t, v, cfg, xtr, gtr, xtr, gtr, csr);
    ad::Var loss = dis_detail::loss_attack_tape(t, f.pa_logits, f.qd_logits, labels, cfg.lambda);
    const double lv = t.val(loss)(0, 0);
    if (!std::isfinite(lv)) {
      throw std::runtime_error("train_attack: non-finite loss at epoch " + std::to_string(epoch));
    }
    head.loss_curve.push_back(lv);
    t.backward(loss);
    std::vector<ad::Var> order = v.all();
    std::vector<const Mat*> grads;
    for (ad::Var var : order) grads.push_back(&t.grad(var));
    opt.step(params, grads);
  }
  return head;
}

// Posteriors for the training rows under the training routing structure.
inline dis_detail::EvalResult attack_train_eval(const AttackHead& head) {
  require(head.train_rows.rows() > 0, "attack_train_eval: untrained head");
  return dis_detail::eval_with_structure(head, head.train_rows, head.train_gates,
                                         dis_detail::to_csr(head.train_nbrs));
}

// Posteriors for arbitrary rows, routed against the stored train rows via
// plain top-k (gates default to the rows themselves when no prompt is used).
inline dis_detail::EvalResult attack_eval(const AttackHead& head, const Mat& rows,
                                          const Mat* gates = nullptr) {
  require(head.train_rows.rows() > 0, "attack_eval: untrained head");
  require(rows.cols() == head.in_dim, "attack_eval: feature dimension mismatch");
  Mat g = rows;
  if (head.uses_prompt) {
    require(gates != nullptr, "attack_eval: head was trained with prompts; gates required");
    require(gates->rows() == rows.rows() && gates->cols() == head.gate_dim,
            "attack_eval: gate shape mismatch");
    g = *gates;
  }
  const int k = std::min(head.cfg.knn, static_cast<int>(head.train_rows.rows()));
  std::vector<std::vector<int>> nbrs = topk_neighbors(rows, head.train_rows, k, false);
  return dis_detail::eval_with_structure(head, rows, g, dis_detail::to_csr(nbrs));
}

}  // namespace proia
