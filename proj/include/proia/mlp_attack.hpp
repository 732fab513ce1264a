#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "proia/adam.hpp"
#include "proia/attack_data.hpp"
#include "proia/tape.hpp"

namespace proia {

// Baseline shadow-attack classifier: a two-layer MLP over the attack rows.
struct MlpAttackConfig {
  int hidden = 32;
  double learning_rate = 0.01;
  int epochs = 100;
  std::uint64_t seed = 0;

  void validate() const {
    require(hidden >= 1, "MlpAttackConfig: hidden must be positive");
    require(learning_rate > 0.0, "MlpAttackConfig: learning_rate must be positive");
    require(epochs >= 0, "MlpAttackConfig: epochs must be nonnegative");
  }
};

struct MlpAttackHead {
  MlpAttackConfig cfg;
  int classes = 0;
  Mat W1, b1, W2, b2;
  std::vector<double> loss_curve;
};

namespace mlp_detail {

inline ad::Var mlp_logits_tape(ad::Tape& t, const ad::Var& x, const ad::Var& W1, const ad::Var& b1,
                               const ad::Var& W2, const ad::Var& b2) {
  ad::Var h = t.relu(t.add_rowvec(t.matmul(x, W1), b1));
  return t.add_rowvec(t.matmul(h, W2), b2);
}

}  // namespace mlp_detail

inline Mat mlp_attack_posteriors(const MlpAttackHead& head, const Mat& rows) {
  require(rows.cols() == head.W1.rows(), "mlp_attack: feature width mismatch");
  ad::Tape t;
  ad::Var logits = mlp_detail::mlp_logits_tape(t, t.constant(rows), t.constant(head.W1),
                                               t.constant(head.b1), t.constant(head.W2),
                                               t.constant(head.b2));
  return t.val(t.row_softmax(logits));
}

inline MlpAttackHead train_mlp_attack(const AttackDataset& ds, const MlpAttackConfig& cfg) {
  cfg.validate();
  ds.validate();
  require(!ds.train_rows.empty(), "train_mlp_attack: empty train split");
  const int classes = ds.num_label_classes();
  require(classes >= 2, "train_mlp_attack: need at least two label classes");

  std::vector<int> labels;
  for (int r : ds.train_rows) labels.push_back(ds.labels[static_cast<std::size_t>(r)]);
  Mat x(static_cast<Eigen::Index>(ds.train_rows.size()), ds.rows.cols());
  for (std::size_t i = 0; i < ds.train_rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = ds.rows.row(ds.train_rows[i]);
  }

  Rng rng(derive_seed(cfg.seed, "mlp-attack"));
  MlpAttackHead head;
  head.cfg = cfg;
  head.classes = classes;
  head.W1 = detail::glorot(static_cast<int>(ds.rows.cols()), cfg.hidden, rng);
  head.b1 = Mat::Zero(1, cfg.hidden);
  head.W2 = detail::glorot(cfg.hidden, classes, rng);
  head.b2 = Mat::Zero(1, classes);

  Adam opt(cfg.learning_rate);
  std::vector<Mat*> params = {&head.W1, &head.b1, &head.W2, &head.b2};
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape t;
    ad::Var W1 = t.leaf(head.W1, true), b1 = t.leaf(head.b1, true);
    ad::Var W2 = t.leaf(head.W2, true), b2 = t.leaf(head.b2, true);
    ad::Var loss = t.cross_entropy_mean(
        mlp_detail::mlp_logits_tape(t, t.constant(x), W1, b1, W2, b2), labels);
    const double lv = t.val(loss)(0, 0);
    if (!std::isfinite(lv)) {
      throw std::runtime_error("train_mlp_attack: non-finite loss at epoch " +
                               std::to_string(epoch));
    }
    head.loss_curve.push_back(lv);
    t.backward(loss);
    std::vector<const Mat*> grads = {&t.grad(W1), &t.grad(b1), &t.grad(W2), &t.grad(b2)};
    opt.step(params, grads);
  }
  return head;
}

}  // namespace proia
