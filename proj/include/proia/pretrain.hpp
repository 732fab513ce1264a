#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "proia/adam.hpp"
#include "proia/graph.hpp"
#include "proia/rng.hpp"
#include "proia/sampling.hpp"
#include "proia/tape.hpp"

namespace proia {

enum class EncodeMode { deterministic, stochastic };

struct PretrainConfig {
  int layers = 2;
  int hidden_dim = 256;
  double beta_a = 1e-3;
  double beta_m = 1e-3;
  double alpha = 0.5;          // trade-off between contrastive and IB terms
  double threshold_t = 0.1;    // Jaccard pruning threshold for the local view
  double bernoulli_q = 0.05;   // augmentation edge probability
  double learning_rate = 1e-4;
  int epochs = 200;
  double sigma_fixed = 0.1;    // structure-weight noise scale
  int prompt_khop = 2;         // subgraph radius for prompt readout
  std::uint64_t seed = 0;

  void validate() const {
    require(layers >= 1, "PretrainConfig: layers must be >= 1");
    require(hidden_dim >= 1, "PretrainConfig: hidden_dim must be >= 1");
    require(beta_a >= 0.0 && beta_m >= 0.0, "PretrainConfig: betas must be nonnegative");
    require(alpha >= 0.0 && alpha <= 1.0, "PretrainConfig: alpha must lie in [0,1]");
    require(bernoulli_q >= 0.0 && bernoulli_q <= 1.0, "PretrainConfig: bernoulli_q in [0,1]");
    require(learning_rate > 0.0, "PretrainConfig: learning_rate must be positive");
    require(epochs >= 0, "PretrainConfig: epochs must be nonnegative");
    require(sigma_fixed > 0.0, "PretrainConfig: sigma_fixed must be positive");
    require(prompt_khop >= 0, "PretrainConfig: prompt_khop must be nonnegative");
  }
};

inline std::uint64_t config_digest(const PretrainConfig& c) {
  std::string s = std::to_string(c.layers) + "|" + std::to_string(c.hidden_dim) + "|" +
                  std::to_string(c.beta_a) + "|" + std::to_string(c.beta_m) + "|" +
                  std::to_string(c.alpha) + "|" + std::to_string(c.threshold_t) + "|" +
                  std::to_string(c.bernoulli_q) + "|" + std::to_string(c.learning_rate) + "|" +
                  std::to_string(c.epochs) + "|" + std::to_string(c.sigma_fixed) + "|" +
                  std::to_string(c.prompt_khop) + "|" + std::to_string(c.seed);
  return fnv1a64(s);
}

// Directed incidence list with self-loops; every undirected edge contributes
// both directions. dst receives messages from src.
struct Incidence {
  std::vector<int> dst, src;

  static Incidence build(const Graph& g) {
    Incidence inc;
    inc.dst.reserve(static_cast<std::size_t>(g.node_count() + 2 * g.edge_count()));
    inc.src.reserve(inc.dst.capacity());
    for (int v = 0; v < g.node_count(); ++v) {
      inc.dst.push_back(v);
      inc.src.push_back(v);
    }
    for (const auto& [a, b] : g.edges()) {
      inc.dst.push_back(a);
      inc.src.push_back(b);
      inc.dst.push_back(b);
      inc.src.push_back(a);
    }
    return inc;
  }

  int size() const { return static_cast<int>(dst.size()); }
};

struct LayerParams {
  Mat W;       // in_dim x hidden
  Mat w_attn;  // 2*hidden x 1
  Mat W_mu, W_lv;  // hidden x hidden
  Mat b_mu, b_lv;  // 1 x hidden
};

struct EncoderParams {
  std::vector<LayerParams> layers;
  Mat W_cls, b_cls;  // hidden x C, 1 x C
  Mat W_bil;         // hidden x hidden (bilinear discriminator)
  Mat b_bil;         // 1 x 1

  int hidden_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int num_layers() const { return static_cast<int>(layers.size()); }

  std::vector<Mat*> trainable() {
    std::vector<Mat*> out;
    for (auto& l : layers) {
      out.push_back(&l.W);
      out.push_back(&l.w_attn);
      out.push_back(&l.W_mu);
      out.push_back(&l.b_mu);
      out.push_back(&l.W_lv);
      out.push_back(&l.b_lv);
    }
    out.push_back(&W_cls);
    out.push_back(&b_cls);
    out.push_back(&W_bil);
    out.push_back(&b_bil);
    return out;
  }
};

namespace detail {

inline Mat glorot(int rows, int cols, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, s);
  return m;
}

}  // namespace detail

inline EncoderParams init_encoder(int in_dim, int hidden, int layers, int classes, Rng& rng) {
  require(in_dim >= 1 && hidden >= 1 && layers >= 1 && classes >= 1,
          "init_encoder: dimensions must be positive");
  EncoderParams p;
  for (int l = 0; l < layers; ++l) {
    const int din = l == 0 ? in_dim : hidden;
    LayerParams lp;
    lp.W = detail::glorot(din, hidden, rng);
    lp.w_attn = detail::glorot(2 * hidden, 1, rng);
    lp.W_mu = detail::glorot(hidden, hidden, rng);
    lp.W_lv = detail::glorot(hidden, hidden, rng);
    lp.b_mu = Mat::Zero(1, hidden);
    lp.b_lv = Mat::Zero(1, hidden);
    p.layers.push_back(std::move(lp));
  }
  p.W_cls = detail::glorot(hidden, classes, rng);
  p.b_cls = Mat::Zero(1, classes);
  p.W_bil = detail::glorot(hidden, hidden, rng);
  p.b_bil = Mat::Zero(1, 1);
  return p;
}

// ---- tape-level encoder ----

namespace enc {

using ad::Tape;
using ad::Var;

struct LayerVars {
  Var W, w_attn, W_mu, b_mu, W_lv, b_lv;
};

struct EncoderVars {
  std::vector<LayerVars> layers;
  Var W_cls, b_cls, W_bil, b_bil;

  // Same order as EncoderParams::trainable().
  std::vector<Var> all() const {
    std::vector<Var> out;
    for (const auto& l : layers) {
      out.push_back(l.W);
      out.push_back(l.w_attn);
      out.push_back(l.W_mu);
      out.push_back(l.b_mu);
      out.push_back(l.W_lv);
      out.push_back(l.b_lv);
    }
    out.push_back(W_cls);
    out.push_back(b_cls);
    out.push_back(W_bil);
    out.push_back(b_bil);
    return out;
  }
};

inline EncoderVars lift(Tape& t, const EncoderParams& p, bool requires_grad) {
  EncoderVars ev;
  for (const auto& l : p.layers) {
    ev.layers.push_back({t.leaf(l.W, requires_grad), t.leaf(l.w_attn, requires_grad),
                         t.leaf(l.W_mu, requires_grad), t.leaf(l.b_mu, requires_grad),
                         t.leaf(l.W_lv, requires_grad), t.leaf(l.b_lv, requires_grad)});
  }
  ev.W_cls = t.leaf(p.W_cls, requires_grad);
  ev.b_cls = t.leaf(p.b_cls, requires_grad);
  ev.W_bil = t.leaf(p.W_bil, requires_grad);
  ev.b_bil = t.leaf(p.b_bil, requires_grad);
  return ev;
}

struct LayerTrace {
  Var phi;  // E x 1 attention means (pre-noise)
  Var mu, logvar;  // N x hidden
  Var z;           // N x hidden (reparameterized or mean)
};

// One dual-channel layer: project, score incidences, aggregate with (noisy)
// weights, then emit a Gaussian whose sample (or mean) is the layer output.
// Stochastic mode consumes rng in a fixed order: edge noise, then reparam
// noise — keep call sites consistent for reproducibility.
inline LayerTrace encode_layer_tape(Tape& t, Var z_prev, const LayerVars& lp,
                                    const Incidence& inc, int n, EncodeMode mode, Rng& rng,
                                    double sigma_fixed) {
  Var zhat = t.matmul(t.relu(z_prev), lp.W);
  Var cat = t.concat_cols({t.gather_rows(zhat, inc.dst), t.gather_rows(zhat, inc.src)});
  Var phi = t.sigmoid(t.matmul(cat, lp.w_attn));
  Var w = phi;
  if (mode == EncodeMode::stochastic) {
    Mat noise(inc.size(), 1);
    for (int e = 0; e < inc.size(); ++e) noise(e, 0) = sigma_fixed * rng.normal();
    w = t.add(phi, t.constant(noise));
  }
  Var zagg = t.weighted_gather_sum(zhat, inc.dst, inc.src, w, n);
  Var mu = t.add_rowvec(t.matmul(zagg, lp.W_mu), lp.b_mu);
  Var logvar = t.clamp(t.add_rowvec(t.matmul(zagg, lp.W_lv), lp.b_lv), -10.0, 10.0);
  Var z = mu;
  if (mode == EncodeMode::stochastic) {
    Mat eps(n, t.val(mu).cols());
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
      for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
    z = t.add(mu, t.cwise_mul(t.exp_(t.scale(logvar, 0.5)), t.constant(eps)));
  }
  return {phi, mu, logvar, z};
}

struct ForwardTrace {
  Var z0;
  std::vector<LayerTrace> layers;
  Var zL() const { return layers.back().z; }
};

inline ForwardTrace encode_tape(Tape& t, const EncoderVars& ev, const Graph& g,
                                const Incidence& inc, EncodeMode mode, Rng& rng,
                                double sigma_fixed) {
  ForwardTrace f;
  f.z0 = t.constant(g.features());
  Var z = f.z0;
  for (const auto& lp : ev.layers) {
    f.layers.push_back(encode_layer_tape(t, z, lp, inc, g.node_count(), mode, rng, sigma_fixed));
    z = f.layers.back().z;
  }
  return f;
}

inline Var loss_classification_tape(Tape& t, Var zL, Var W_cls, Var b_cls,
                                    const std::vector<int>& labels) {
  return t.cross_entropy_mean(t.add_rowvec(t.matmul(zL, W_cls), b_cls), labels);
}

// KL( N(mu, exp(logvar)) || N(0, I) ), summed over all entries.
inline Var gaussian_kl_std_tape(Tape& t, Var mu, Var logvar) {
  Var term = t.sub(t.add(t.exp_(logvar), t.cwise_mul(mu, mu)), t.add_const(logvar, 1.0));
  return t.scale(t.sum_all(term), 0.5);
}

inline Var loss_attribute_tape(Tape& t, const ForwardTrace& f) {
  Var out = gaussian_kl_std_tape(t, f.layers[0].mu, f.layers[0].logvar);
  for (std::size_t l = 1; l < f.layers.size(); ++l) {
    out = t.add(out, gaussian_kl_std_tape(t, f.layers[l].mu, f.layers[l].logvar));
  }
  return out;
}

// Per incidence: KL( N(phi_e, sigma^2) || N(0,1) ) = phi^2/2 + (sigma^2-1-ln sigma^2)/2.
inline Var loss_membership_tape(Tape& t, const ForwardTrace& f, double sigma_fixed) {
  const double s2 = sigma_fixed * sigma_fixed;
  const double per_edge_const = 0.5 * (s2 - 1.0 - std::log(s2));
  Var out = t.scalar(0.0);
  for (const auto& layer : f.layers) {
    const double e_count = static_cast<double>(t.val(layer.phi).rows());
    Var quad = t.scale(t.sum_all(t.cwise_mul(layer.phi, layer.phi)), 0.5);
    out = t.add(out, t.add(quad, t.scalar(e_count * per_edge_const)));
  }
  return out;
}

// P = logistic(z_lo W z_gl^T + b), clamped away from {0,1} for the logs.
inline Var bilinear_scores_tape(Tape& t, Var z_lo, Var z_gl, Var W, Var b) {
  Var s = t.matmul(t.matmul(z_lo, W), t.transpose(z_gl));
  return t.clamp(t.sigmoid(t.add_scalar_var(s, b)), 1e-7, 1.0 - 1e-7);
}

inline Var loss_contrastive_tape(Tape& t, Var pos, Var neg) {
  Var lp = t.mean_all(t.log_(pos));
  Var ln = t.mean_all(t.log_(t.add_const(t.neg(neg), 1.0)));
  return t.neg(t.add(lp, ln));
}

struct EpochObjective {
  Var l1, lcl, lib, ce;
};

// The full per-epoch pre-training objective (Eq 15 composition). All
// stochastic choices derive from (cfg.seed, epoch), so the objective is a
// deterministic function of the parameters — required by the FD checks.
inline EpochObjective pretrain_objective_tape(Tape& t, const EncoderVars& ev, const Graph& g,
                                              const Graph& sub, const Incidence& inc_g,
                                              const PretrainConfig& cfg, int epoch);

}  // namespace enc

// ---- value-level encoder state and losses ----

struct LatentState {
  std::vector<Mat> z;           // z[0] = input features, then one per layer
  std::vector<Mat> mu, logvar;  // per layer
  std::vector<Mat> phi;         // per layer, E x 1 in incidence order
};

inline LatentState init_state(const Graph& g) {
  LatentState st;
  st.z.push_back(g.features());
  return st;
}

// Fills layer l (1-based). Runs the same tape primitive as training, with
// constant leaves.
inline void encode_layer(LatentState& st, const EncoderParams& p, const Graph& g,
                         const Incidence& inc, int l, EncodeMode mode, Rng& rng,
                         double sigma_fixed) {
  require(l >= 1 && l <= p.num_layers(), "encode_layer: layer index out of range");
  require(static_cast<int>(st.z.size()) >= l, "encode_layer: previous layer uninitialized");
  ad::Tape t;
  const LayerParams& lp = p.layers[static_cast<std::size_t>(l - 1)];
  enc::LayerVars lv{t.constant(lp.W),    t.constant(lp.w_attn), t.constant(lp.W_mu),
                    t.constant(lp.b_mu), t.constant(lp.W_lv),   t.constant(lp.b_lv)};
  enc::LayerTrace tr = enc::encode_layer_tape(t, t.constant(st.z[static_cast<std::size_t>(l - 1)]),
                                              lv, inc, g.node_count(), mode, rng, sigma_fixed);
  st.z.resize(static_cast<std::size_t>(l + 1));
  st.mu.resize(static_cast<std::size_t>(l));
  st.logvar.resize(static_cast<std::size_t>(l));
  st.phi.resize(static_cast<std::size_t>(l));
  st.z[static_cast<std::size_t>(l)] = t.val(tr.z);
  st.mu[static_cast<std::size_t>(l - 1)] = t.val(tr.mu);
  st.logvar[static_cast<std::size_t>(l - 1)] = t.val(tr.logvar);
  st.phi[static_cast<std::size_t>(l - 1)] = t.val(tr.phi);
}

inline LatentState encode(const EncoderParams& p, const Graph& g, EncodeMode mode,
                          std::uint64_t seed, double sigma_fixed) {
  Incidence inc = Incidence::build(g);
  Rng rng(seed);
  LatentState st = init_state(g);
  for (int l = 1; l <= p.num_layers(); ++l) {
    encode_layer(st, p, g, inc, l, mode, rng, sigma_fixed);
  }
  return st;
}

inline Mat classifier_posteriors(const EncoderParams& p, const Mat& zL) {
  ad::Tape t;
  return t.val(t.row_softmax(
      t.add_rowvec(t.matmul(t.constant(zL), t.constant(p.W_cls)), t.constant(p.b_cls))));
}

inline double cross_entropy_probs(const Mat& probs, const std::vector<int>& labels) {
  require(static_cast<Eigen::Index>(labels.size()) == probs.rows(),
          "cross_entropy_probs: label count mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < probs.cols(), "cross_entropy_probs: label out of range");
    total -= std::log(std::max(probs(i, y), 1e-300));
  }
  return total / static_cast<double>(probs.rows());
}

inline double loss_classification(const EncoderParams& p, const Mat& zL,
                                  const std::vector<int>& labels) {
  return cross_entropy_probs(classifier_posteriors(p, zL), labels);
}

inline double gaussian_kl_std(const Mat& mu, const Mat& logvar) {
  return 0.5 * ((logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum());
}

inline double loss_attribute_kl(const LatentState& st) {
  require(!st.mu.empty(), "loss_attribute_kl: channel parameters absent");
  double out = 0.0;
  for (std::size_t l = 0; l < st.mu.size(); ++l) out += gaussian_kl_std(st.mu[l], st.logvar[l]);
  return out;
}

inline double loss_membership_kl(const LatentState& st, double sigma_fixed) {
  require(!st.phi.empty(), "loss_membership_kl: phi absent");
  require(sigma_fixed > 0.0, "loss_membership_kl: sigma must be positive");
  const double s2 = sigma_fixed * sigma_fixed;
  const double per_edge = 0.5 * (s2 - 1.0 - std::log(s2));
  double out = 0.0;
  for (const Mat& phi : st.phi) {
    out += 0.5 * phi.array().square().sum() + per_edge * static_cast<double>(phi.rows());
  }
  return out;
}

inline double loss_ib(double cls, double la, double lm, const PretrainConfig& cfg) {
  return cls + cfg.beta_a * la + cfg.beta_m * lm;
}

// logistic( z_lo^T W z_gl + b ); identity activation on z_lo.
inline double bilinear_score(const Vec& z_lo, const Vec& z_gl, const Mat& W, double b) {
  require(W.rows() == z_lo.size() && W.cols() == z_gl.size(), "bilinear_score: shape mismatch");
  const double s = z_lo.transpose() * W * z_gl + b;
  return 1.0 / (1.0 + std::exp(-s));
}

inline double loss_contrastive(const std::vector<double>& pos, const std::vector<double>& neg) {
  require(!pos.empty() && pos.size() == neg.size(), "loss_contrastive: empty or mismatched");
  double out = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double p = std::clamp(pos[i], 1e-7, 1.0 - 1e-7);
    const double q = std::clamp(neg[i], 1e-7, 1.0 - 1e-7);
    out -= std::log(p) + std::log(1.0 - q);
  }
  return out / static_cast<double>(pos.size());
}

inline double loss_pretrain(double lcl, double lib, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "loss_pretrain: alpha out of range");
  return alpha * lcl + (1.0 - alpha) * lib;
}

// Mean over subgraph nodes of p ⊙ h_v (ReadOut of Eq 3).
inline Vec extract_prompt(const Mat& h, const Vec& p, const std::vector<int>& nodes) {
  require(!nodes.empty(), "extract_prompt: empty subgraph");
  require(p.size() == h.cols(), "extract_prompt: prompt dimension mismatch");
  Vec acc = Vec::Zero(h.cols());
  for (int v : nodes) {
    require(v >= 0 && v < h.rows(), "extract_prompt: node out of range");
    acc += p.cwiseProduct(h.row(v).transpose());
  }
  return acc / static_cast<double>(nodes.size());
}

inline enc::EpochObjective enc::pretrain_objective_tape(Tape& t, const EncoderVars& ev,
                                                        const Graph& g, const Graph& sub,
                                                        const Incidence& inc_g,
                                                        const PretrainConfig& cfg, int epoch) {
  const std::string tag = "pretrain-epoch-" + std::to_string(epoch);
  // Two augmented local views plus their feature-shuffled negatives.
  const Graph va = bernoulli_augment(sub, cfg.bernoulli_q, derive_seed(cfg.seed, tag + "-va"));
  const Graph vb = bernoulli_augment(sub, cfg.bernoulli_q, derive_seed(cfg.seed, tag + "-vb"));
  const Graph na = shuffle_features(va, derive_seed(cfg.seed, tag + "-na"));
  const Graph nb = shuffle_features(vb, derive_seed(cfg.seed, tag + "-nb"));
  const Incidence inc_a = Incidence::build(va);
  const Incidence inc_b = Incidence::build(vb);

  Rng noise(derive_seed(cfg.seed, tag + "-noise"));

  // IB objective on the full graph.
  ForwardTrace f = encode_tape(t, ev, g, inc_g, EncodeMode::stochastic, noise, cfg.sigma_fixed);
  Var ce = loss_classification_tape(t, f.zL(), ev.W_cls, ev.b_cls, g.labels());
  Var lib = t.add(ce, t.add(t.scale(loss_attribute_tape(t, f), cfg.beta_a),
                            t.scale(loss_membership_tape(t, f, cfg.sigma_fixed), cfg.beta_m)));

  // Global summary: mean readout of the full-graph embeddings.
  const double inv_n = 1.0 / static_cast<double>(g.node_count());
  Var zgl = t.scale(t.matmul(t.constant(Mat::Ones(1, g.node_count())), f.zL()), inv_n);

  auto view_scores = [&](const Graph& view, const Incidence& inc) {
    ForwardTrace fv = encode_tape(t, ev, view, inc, EncodeMode::stochastic, noise,
                                  cfg.sigma_fixed);
    return bilinear_scores_tape(t, fv.zL(), zgl, ev.W_bil, ev.b_bil);
  };
  // Sequenced explicitly: view_scores consumes the noise stream.
  Var pos_a = view_scores(va, inc_a);
  Var neg_a = view_scores(na, inc_a);
  Var pos_b = view_scores(vb, inc_b);
  Var neg_b = view_scores(nb, inc_b);
  Var lcl = t.scale(t.add(loss_contrastive_tape(t, pos_a, neg_a),
                          loss_contrastive_tape(t, pos_b, neg_b)),
                    0.5);

  Var l1 = t.add(t.scale(lcl, cfg.alpha), t.scale(lib, 1.0 - cfg.alpha));
  return {l1, lcl, lib, ce};
}

struct PromptFeature {
  Mat p;                   // one row per node of the pre-training graph
  std::string provenance;  // config digest + seed
};

struct PretrainResult {
  PretrainConfig cfg;
  EncoderParams params;
  PromptFeature prompt;
  std::vector<double> loss_curve;
};

inline PretrainResult pretrain(const Graph& g, const PretrainConfig& cfg) {
  cfg.validate();
  Rng init_rng(derive_seed(cfg.seed, "pretrain-init"));
  EncoderParams params = init_encoder(g.feature_dim(), cfg.hidden_dim, cfg.layers,
                                      g.num_classes(), init_rng);
  const Graph sub = build_local_subgraph(g, cfg.threshold_t);
  const Incidence inc_g = Incidence::build(g);
  Adam opt(cfg.learning_rate);
  std::vector<Mat*> train_ptrs = params.trainable();
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape t;
    enc::EncoderVars ev = enc::lift(t, params, true);
    enc::EpochObjective obj = enc::pretrain_objective_tape(t, ev, g, sub, inc_g, cfg, epoch);
    const double loss = t.val(obj.l1)(0, 0);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch));
    }
    curve.push_back(loss);

    t.backward(obj.l1);
    std::vector<const Mat*> grads;
    for (ad::Var v : ev.all()) grads.push_back(&t.grad(v));
    opt.step(train_ptrs, grads);
  }

  // Prompt features from the trained encoder: deterministic embeddings, then
  // all-ones prompt token mean-pooled over each node's k-hop subgraph.
  LatentState st = encode(params, g, EncodeMode::deterministic, 0, cfg.sigma_fixed);
  const Mat& h = st.z.back();
  const Vec token = Vec::Ones(h.cols());
  Mat prompts(g.node_count(), h.cols());
  for (int v = 0; v < g.node_count(); ++v) {
    prompts.row(v) = extract_prompt(h, token, khop_nodes(g, v, cfg.prompt_khop)).transpose();
  }

  PretrainResult out;
  out.cfg = cfg;
  out.params = std::move(params);
  out.prompt.p = std::move(prompts);
  out.prompt.provenance = "cfg:" + hex64(config_digest(cfg)) + " seed:" + std::to_string(cfg.seed);
  out.loss_curve = std::move(curve);
  return out;
}

}  // namespace proia
