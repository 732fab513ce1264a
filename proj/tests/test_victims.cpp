#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "proia/dataset.hpp"
#include "proia/victim.hpp"

namespace proia {
namespace {

// Path graph 0-1-2 with fixed 2-d features.
Graph path3() {
  Mat x(3, 2);
  x << 1.0, 0.5,
      -0.3, 0.8,
      0.2, -0.6;
  return Graph(3, {{0, 1}, {1, 2}}, x, {0, 1, 0}, std::nullopt);
}

Mat softmax_rows_oracle(const Mat& logits) {
  Mat out = logits;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Vec row = logits.row(i).transpose();
    double m = row.maxCoeff();
    Vec e = (row.array() - m).exp();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

ModelHandle manual_handle(const BackboneSpec& spec, std::vector<Mat> weights, int classes) {
  ModelHandle h;
  h.spec = spec;
  h.weights = std::move(weights);
  h.num_classes = classes;
  return h;
}

TEST(VictimForward, GcnOneLayerMatchesHandComputation) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 1;

  Mat W(2, 2);
  W << 0.4, -0.2,
      0.1, 0.7;
  Mat b(1, 2);
  b << 0.05, -0.1;
  ModelHandle m = manual_handle(spec, {W, b}, 2);

  Mat proj = g.features() * W;
  Mat logits(3, 2);
  logits.row(0) = (proj.row(0) + proj.row(1)) / 2.0 + b.row(0);
  logits.row(1) = (proj.row(0) + proj.row(1) + proj.row(2)) / 3.0 + b.row(0);
  logits.row(2) = (proj.row(1) + proj.row(2)) / 2.0 + b.row(0);
  Mat expect = softmax_rows_oracle(logits);

  Mat got = query_posteriors(m, g, {0, 1, 2}, std::nullopt);
  ASSERT_EQ(got.rows(), 3);
  ASSERT_EQ(got.cols(), 2);
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VictimForward, GcnTwoLayerAppliesReluBetweenLayers) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 2;
  spec.hidden_dim = 3;

  Mat W0(2, 3), b0(1, 3), W1(3, 2), b1(1, 2);
  W0 << 0.5, -0.4, 0.2,
      0.3, 0.6, -0.7;
  b0 << 0.1, -0.2, 0.0;
  W1 << 0.2, -0.1,
      -0.5, 0.4,
      0.3, 0.3;
  b1 << 0.0, 0.05;
  ModelHandle m = manual_handle(spec, {W0, b0, W1, b1}, 2);

  auto gcn_agg = [&](const Mat& proj) {
    Mat agg(3, proj.cols());
    agg.row(0) = (proj.row(0) + proj.row(1)) / 2.0;
    agg.row(1) = (proj.row(0) + proj.row(1) + proj.row(2)) / 3.0;
    agg.row(2) = (proj.row(1) + proj.row(2)) / 2.0;
    return agg;
  };
  Mat h1 = gcn_agg(g.features() * W0);
  h1.rowwise() += b0.row(0);
  h1 = h1.cwiseMax(0.0);
  Mat logits = gcn_agg(h1 * W1);
  logits.rowwise() += b1.row(0);
  Mat expect = softmax_rows_oracle(logits);

  Mat got = query_posteriors(m, g, {0, 1, 2}, std::nullopt);
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VictimForward, GatOneLayerMatchesHandComputation) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gat;
  spec.layers = 1;

  Mat W(2, 2), a(4, 1), b(1, 2);
  W << 0.4, -0.2,
      0.1, 0.7;
  a << 0.3, -0.5, 0.8, 0.2;
  b << 0.0, 0.1;
  ModelHandle m = manual_handle(spec, {W, a, b}, 2);

  Mat proj = g.features() * W;
  auto leaky = [](double v) { return v > 0.0 ? v : 0.2 * v; };
  auto score = [&](int dst, int src) {
    Eigen::RowVector4d cat;
    cat << proj(dst, 0), proj(dst, 1), proj(src, 0), proj(src, 1);
    return leaky((cat * a)(0, 0));
  };
  // Incidence order per dst: self-loop first, then sorted neighbors.
  std::vector<std::vector<int>> seg = {{0, 1}, {1, 0, 2}, {2, 1}};
  Mat logits = Mat::Zero(3, 2);
  for (int v = 0; v < 3; ++v) {
    std::vector<double> sc;
    double mx = -1e300;
    for (int u : seg[static_cast<std::size_t>(v)]) {
      sc.push_back(score(v, u));
      mx = std::max(mx, sc.back());
    }
    double z = 0.0;
    for (double s : sc) z += std::exp(s - mx);
    for (std::size_t i = 0; i < sc.size(); ++i) {
      const double alpha = std::exp(sc[i] - mx) / z;
      logits.row(v) += alpha * proj.row(seg[static_cast<std::size_t>(v)][i]);
    }
    logits.row(v) += b.row(0);
  }
  Mat expect = softmax_rows_oracle(logits);

  Mat got = query_posteriors(m, g, {0, 1, 2}, std::nullopt);
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VictimForward, SageOneLayerMatchesHandComputation) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::sage;
  spec.layers = 1;

  Mat Ws(2, 2), Wn(2, 2), b(1, 2);
  Ws << 0.4, -0.2,
      0.1, 0.7;
  Wn << -0.3, 0.5,
      0.2, 0.1;
  b << 0.02, -0.04;
  ModelHandle m = manual_handle(spec, {Ws, Wn, b}, 2);

  Mat self = g.features() * Ws;
  Mat nbp = g.features() * Wn;
  Mat logits(3, 2);
  logits.row(0) = self.row(0) + nbp.row(1) + b.row(0);
  logits.row(1) = self.row(1) + (nbp.row(0) + nbp.row(2)) / 2.0 + b.row(0);
  logits.row(2) = self.row(2) + nbp.row(1) + b.row(0);
  Mat expect = softmax_rows_oracle(logits);

  Mat got = query_posteriors(m, g, {0, 1, 2}, std::nullopt);
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VictimForward, PosteriorRowsSumToOne) {
  SyntheticParams p;
  p.block_sizes = {12, 12};
  Graph g = generate_synthetic(p, 7);
  for (BackboneKind k : {BackboneKind::gcn, BackboneKind::gat, BackboneKind::sage}) {
    BackboneSpec spec;
    spec.kind = k;
    spec.layers = 2;
    spec.hidden_dim = 5;
    spec.epochs = 0;
    ModelHandle m = train_victim(g, {0, 1, 2, 3}, {}, spec, std::nullopt, 11);
    Mat post = query_posteriors(m, g, {0, 5, 9, 20}, std::nullopt);
    ASSERT_EQ(post.rows(), 4);
    ASSERT_EQ(post.cols(), g.num_classes());
    for (Eigen::Index i = 0; i < post.rows(); ++i) {
      EXPECT_NEAR(post.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(post.row(i).minCoeff(), 0.0);
    }
  }
}

TEST(VictimForward, AllOnesPromptIsIdentity) {
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 3);
  PromptFeature ones;
  ones.p = Mat::Ones(g.node_count(), 13);  // width differs from every layer dim
  ones.provenance = "test";
  std::vector<int> nodes = {0, 4, 7, 15};
  for (BackboneKind k : {BackboneKind::gcn, BackboneKind::gat, BackboneKind::sage}) {
    BackboneSpec spec;
    spec.kind = k;
    spec.layers = 2;
    spec.hidden_dim = 6;
    spec.epochs = 0;
    ModelHandle m = train_victim(g, {0, 1, 2}, {}, spec, std::nullopt, 5);
    Mat bare = query_posteriors(m, g, nodes, std::nullopt);
    Mat prompted = query_posteriors(m, g, nodes, ones);
    EXPECT_LT((bare - prompted).cwiseAbs().maxCoeff(), 1e-12) << backbone_name(k);
  }
}

TEST(VictimForward, NonTrivialPromptChangesPosteriors) {
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 3);
  PromptFeature pf;
  Rng rng(99);
  pf.p = Mat::Zero(g.node_count(), 8);
  for (Eigen::Index i = 0; i < pf.p.rows(); ++i) {
    for (Eigen::Index j = 0; j < pf.p.cols(); ++j) pf.p(i, j) = rng.normal();
  }
  BackboneSpec spec;
  spec.layers = 2;
  spec.hidden_dim = 6;
  spec.epochs = 0;
  ModelHandle m = train_victim(g, {0, 1, 2}, {}, spec, std::nullopt, 5);
  std::vector<int> nodes = {0, 9, 12};
  Mat bare = query_posteriors(m, g, nodes, std::nullopt);
  Mat prompted = query_posteriors(m, g, nodes, pf);
  EXPECT_GT((bare - prompted).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(VictimForward, PromptConditioningMatchesOracleOneLayer) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 1;

  Mat W(2, 2), b(1, 2);
  W << 0.4, -0.2,
      0.1, 0.7;
  b << 0.0, 0.0;
  ModelHandle m = manual_handle(spec, {W, b}, 2);

  PromptFeature pf;
  pf.p = Mat(3, 2);  // matches first-layer output width -> identity adapter
  pf.p << 1.0, 2.0,
      0.5, 1.5,
      -1.0, 1.0;

  Mat proj = (g.features() * W).cwiseProduct(pf.p);
  Mat logits(3, 2);
  logits.row(0) = (proj.row(0) + proj.row(1)) / 2.0;
  logits.row(1) = (proj.row(0) + proj.row(1) + proj.row(2)) / 3.0;
  logits.row(2) = (proj.row(1) + proj.row(2)) / 2.0;
  Mat expect = softmax_rows_oracle(logits);

  Mat got = query_posteriors(m, g, {0, 1, 2}, pf);
  EXPECT_LT((got - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VictimForward, PromptRowMismatchThrows) {
  Graph g = path3();
  BackboneSpec spec;
  spec.layers = 1;
  Mat W = Mat::Identity(2, 2);
  ModelHandle m = manual_handle(spec, {W, Mat::Zero(1, 2)}, 2);
  PromptFeature pf;
  pf.p = Mat::Ones(5, 2);
  EXPECT_THROW(query_posteriors(m, g, {0}, pf), std::invalid_argument);
}

TEST(AdaptPrompt, BlockMeansAndIdentity) {
  Mat p(1, 4);
  p << 1.0, 2.0, 3.0, 4.0;
  Mat same = adapt_prompt(p, 4);
  EXPECT_LT((same - p).cwiseAbs().maxCoeff(), 1e-15);

  Mat two = adapt_prompt(p, 2);
  EXPECT_NEAR(two(0, 0), 1.5, 1e-15);
  EXPECT_NEAR(two(0, 1), 3.5, 1e-15);

  Mat three = adapt_prompt(p, 3);
  EXPECT_NEAR(three(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(three(0, 1), 2.0, 1e-15);
  EXPECT_NEAR(three(0, 2), 3.5, 1e-15);

  Mat narrow(1, 2);
  narrow << 5.0, 7.0;
  Mat up = adapt_prompt(narrow, 4);
  EXPECT_NEAR(up(0, 0), 5.0, 1e-15);
  EXPECT_NEAR(up(0, 1), 5.0, 1e-15);
  EXPECT_NEAR(up(0, 2), 7.0, 1e-15);
  EXPECT_NEAR(up(0, 3), 7.0, 1e-15);

  Mat ones = adapt_prompt(Mat::Ones(6, 5), 3);
  EXPECT_LT((ones - Mat::Ones(6, 3)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(adapt_prompt(p, 0), std::invalid_argument);
}

TEST(NeighborOverrideScope, OneLayerOnlyAffectsOverriddenNode) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 1;
  Mat W(2, 2), b(1, 2);
  W << 0.4, -0.2,
      0.1, 0.7;
  b << 0.0, 0.0;
  ModelHandle m = manual_handle(spec, {W, b}, 2);

  NeighborOverride ov;
  ov.nbrs[0] = {2};  // node 0 now aggregates over {0, 2}
  Mat base = query_posteriors(m, g, {0, 1, 2}, std::nullopt);
  Mat mod = query_posteriors(m, g, {0, 1, 2}, std::nullopt, &ov);

  Mat proj = g.features() * W;
  Mat row0 = softmax_rows_oracle(((proj.row(0) + proj.row(2)) / 2.0).eval());
  EXPECT_LT((mod.row(0) - row0.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((mod.row(0) - base.row(0)).cwiseAbs().maxCoeff(), 1e-9);
  // One-layer model: other nodes keep their own aggregation.
  EXPECT_LT((mod.row(1) - base.row(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((mod.row(2) - base.row(2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NeighborOverrideScope, EmptyListLeavesSelfLoopOnly) {
  Graph g = path3();
  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 1;
  Mat W = Mat::Identity(2, 2);
  ModelHandle m = manual_handle(spec, {W, Mat::Zero(1, 2)}, 2);
  NeighborOverride ov;
  ov.nbrs[1] = {};
  Mat post = query_posteriors(m, g, {1}, std::nullopt, &ov);
  Mat expect = softmax_rows_oracle(g.features().row(1).eval());
  EXPECT_LT((post - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NeighborOverrideScope, OutOfRangeIndexThrows) {
  Graph g = path3();
  BackboneSpec spec;
  spec.layers = 1;
  ModelHandle m = manual_handle(spec, {Mat::Identity(2, 2), Mat::Zero(1, 2)}, 2);
  NeighborOverride ov;
  ov.nbrs[0] = {99};
  EXPECT_THROW(query_posteriors(m, g, {0}, std::nullopt, &ov), std::invalid_argument);
}

TEST(TrainVictim, LearnsSeparableData) {
  SyntheticParams p;
  p.block_sizes = {20, 20};
  p.intra_p = 0.3;
  p.inter_p = 0.02;
  p.class_skew = 0.97;
  p.feature_on_p = 0.7;
  p.feature_off_p = 0.02;
  p.feature_dim = 16;
  Graph g = generate_synthetic(p, 21);

  std::vector<int> train, test;
  for (int v = 0; v < g.node_count(); ++v) (v % 4 == 0 ? test : train).push_back(v);

  BackboneSpec spec;
  spec.kind = BackboneKind::gcn;
  spec.layers = 2;
  spec.hidden_dim = 8;
  spec.learning_rate = 0.05;
  spec.epochs = 120;
  ModelHandle m = train_victim(g, train, test, spec, std::nullopt, 3);
  EXPECT_GT(m.train_acc, 0.9);
  EXPECT_GT(m.test_acc, 0.5);
  EXPECT_LT(m.loss_curve.back(), m.loss_curve.front());
  EXPECT_EQ(static_cast<int>(m.loss_curve.size()), spec.epochs);
}

TEST(TrainVictim, AllBackbonesReduceLoss) {
  SyntheticParams p;
  p.block_sizes = {12, 12};
  p.feature_on_p = 0.6;
  p.feature_off_p = 0.05;
  Graph g = generate_synthetic(p, 8);
  std::vector<int> train;
  for (int v = 0; v < g.node_count(); v += 2) train.push_back(v);
  for (BackboneKind k : {BackboneKind::gcn, BackboneKind::gat, BackboneKind::sage}) {
    BackboneSpec spec;
    spec.kind = k;
    spec.layers = 2;
    spec.hidden_dim = 6;
    spec.learning_rate = 0.03;
    spec.epochs = 40;
    ModelHandle m = train_victim(g, train, {}, spec, std::nullopt, 13);
    EXPECT_LT(m.loss_curve.back(), m.loss_curve.front()) << backbone_name(k);
    EXPECT_TRUE(std::isfinite(m.loss_curve.back()));
  }
}

TEST(TrainVictim, DeterministicGivenSeed) {
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 17);
  std::vector<int> train = {0, 2, 4, 6, 8, 10, 12};
  BackboneSpec spec;
  spec.layers = 2;
  spec.hidden_dim = 5;
  spec.learning_rate = 0.02;
  spec.epochs = 15;

  ModelHandle a = train_victim(g, train, {}, spec, std::nullopt, 42);
  ModelHandle b = train_victim(g, train, {}, spec, std::nullopt, 42);
  ASSERT_EQ(a.weights.size(), b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i) {
    EXPECT_LT((a.weights[i] - b.weights[i]).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_EQ(a.loss_curve, b.loss_curve);

  ModelHandle c = train_victim(g, train, {}, spec, std::nullopt, 43);
  EXPECT_GT((a.weights[0] - c.weights[0]).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TrainVictim, ShadowEqualsTargetUnderSameSeedAndData) {
  // The shadow/target contract: identical training inputs produce bitwise
  // identical models, so the adversary's shadow faithfully mimics a target
  // trained the same way.
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 23);
  std::vector<int> train = {1, 3, 5, 7, 9, 11};
  BackboneSpec spec;
  spec.layers = 1;
  spec.epochs = 10;
  spec.learning_rate = 0.05;
  ModelHandle target = train_victim(g, train, {}, spec, std::nullopt, 7);
  ModelHandle shadow = train_victim(g, train, {}, spec, std::nullopt, 7);
  EXPECT_EQ(target.fingerprint, shadow.fingerprint);
  Mat pt = query_posteriors(target, g, {0, 5, 15}, std::nullopt);
  Mat ps = query_posteriors(shadow, g, {0, 5, 15}, std::nullopt);
  EXPECT_LT((pt - ps).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TrainVictim, FingerprintSeparatesSplitsAndGraphs) {
  SyntheticParams p;
  p.block_sizes = {8, 8};
  Graph g1 = generate_synthetic(p, 1);
  Graph g2 = generate_synthetic(p, 2);
  EXPECT_NE(split_fingerprint(g1, {0, 1, 2}), split_fingerprint(g1, {0, 1, 3}));
  EXPECT_NE(split_fingerprint(g1, {0, 1, 2}), split_fingerprint(g2, {0, 1, 2}));
  EXPECT_EQ(split_fingerprint(g1, {0, 1, 2}), split_fingerprint(g1, {0, 1, 2}));
}

TEST(TrainVictim, WeightDecayShrinksWeights) {
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 31);
  std::vector<int> train = {0, 1, 2, 3, 4, 5, 6, 7};
  BackboneSpec spec;
  spec.layers = 2;
  spec.hidden_dim = 5;
  spec.learning_rate = 0.02;
  spec.epochs = 60;
  ModelHandle free = train_victim(g, train, {}, spec, std::nullopt, 9);
  spec.weight_decay = 0.1;
  ModelHandle reg = train_victim(g, train, {}, spec, std::nullopt, 9);
  EXPECT_LT(reg.weights[0].norm(), free.weights[0].norm());
}

TEST(TrainVictim, EpochsZeroGivesRandomInitModel) {
  SyntheticParams p;
  p.block_sizes = {10, 10};
  Graph g = generate_synthetic(p, 37);
  BackboneSpec spec;
  spec.epochs = 0;
  spec.layers = 1;
  ModelHandle m = train_victim(g, {0, 1, 2, 3}, {4, 5, 6, 7}, spec, std::nullopt, 1);
  EXPECT_TRUE(m.loss_curve.empty());
  EXPECT_EQ(m.num_classes, g.num_classes());
  Mat post = query_posteriors(m, g, {0}, std::nullopt);
  EXPECT_NEAR(post.sum(), 1.0, 1e-12);
}

TEST(TrainVictim, InputValidation) {
  SyntheticParams p;
  p.block_sizes = {6, 6};
  Graph g = generate_synthetic(p, 2);
  BackboneSpec spec;
  EXPECT_THROW(train_victim(g, {}, {}, spec, std::nullopt, 1), std::invalid_argument);
  EXPECT_THROW(train_victim(g, {99}, {}, spec, std::nullopt, 1), std::invalid_argument);
  spec.layers = 0;
  EXPECT_THROW(train_victim(g, {0}, {}, spec, std::nullopt, 1), std::invalid_argument);
  spec.layers = 1;
  spec.learning_rate = 0.0;
  EXPECT_THROW(train_victim(g, {0}, {}, spec, std::nullopt, 1), std::invalid_argument);
}

TEST(TrainVictim, PromptAtTrainFlagControlsConditioning) {
  SyntheticParams p;
  p.block_sizes = {8, 8};
  Graph g = generate_synthetic(p, 41);
  PromptFeature pf;
  Rng rng(5);
  pf.p = Mat::Zero(g.node_count(), 4);
  for (Eigen::Index i = 0; i < pf.p.rows(); ++i) {
    for (Eigen::Index j = 0; j < pf.p.cols(); ++j) pf.p(i, j) = 1.0 + 0.5 * rng.normal();
  }
  BackboneSpec spec;
  spec.layers = 1;
  spec.epochs = 10;
  spec.learning_rate = 0.05;

  ModelHandle with = train_victim(g, {0, 1, 2, 3, 4, 5}, {}, spec, pf, 7);
  EXPECT_TRUE(with.prompt_conditioned);
  spec.prompt_at_train = false;
  ModelHandle without = train_victim(g, {0, 1, 2, 3, 4, 5}, {}, spec, pf, 7);
  EXPECT_FALSE(without.prompt_conditioned);
  // Conditioning changes the learned weights.
  EXPECT_GT((with.weights[0] - without.weights[0]).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace proia
