#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "proia/common.hpp"

namespace proia {

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  require(pred.size() == truth.size(), "accuracy: size mismatch");
  require(!pred.empty(), "accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

// Support-weighted mean of per-class F1. Classes absent from the truth vector
// carry zero weight; a class with no predicted or true positives scores 0.
inline double weighted_f1(const std::vector<int>& pred, const std::vector<int>& truth,
                          int num_classes) {
  require(pred.size() == truth.size(), "weighted_f1: size mismatch");
  require(!pred.empty(), "weighted_f1: empty input");
  require(num_classes > 0, "weighted_f1: num_classes must be positive");
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0),
      support(num_classes, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    require(p >= 0 && p < num_classes && t >= 0 && t < num_classes,
            "weighted_f1: label out of range");
    support[t] += 1.0;
    if (p == t) {
      tp[t] += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  double out = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if (support[c] == 0.0) continue;
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    const double f1 = denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    out += f1 * support[c];
  }
  return out / static_cast<double>(pred.size());
}

// Rank-based AUC (equivalent to the Mann-Whitney U statistic). Ties between a
// positive and a negative score count 1/2.
inline double auc_roc(const std::vector<double>& score, const std::vector<int>& label) {
  require(score.size() == label.size(), "auc_roc: size mismatch");
  double pos = 0.0, neg = 0.0;
  for (int y : label) {
    require(y == 0 || y == 1, "auc_roc: labels must be 0/1");
    (y == 1 ? pos : neg) += 1.0;
  }
  require(pos > 0.0 && neg > 0.0, "auc_roc: need both classes");

  std::vector<std::size_t> order(score.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });

  // Average ranks over tie groups, then sum ranks of positives.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (label[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  return (rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// ROC curve points sweeping the threshold over distinct scores, descending.
// Starts at (0,0) with threshold +inf and ends at (1,1).
inline std::vector<RocPoint> roc_points(const std::vector<double>& score,
                                        const std::vector<int>& label) {
  require(score.size() == label.size(), "roc_points: size mismatch");
  double pos = 0.0, neg = 0.0;
  for (int y : label) {
    require(y == 0 || y == 1, "roc_points: labels must be 0/1");
    (y == 1 ? pos : neg) += 1.0;
  }
  require(pos > 0.0 && neg > 0.0, "roc_points: need both classes");

  std::vector<std::size_t> order(score.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  std::vector<RocPoint> out;
  out.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      (label[order[k]] == 1 ? tp : fp) += 1.0;
    }
    out.push_back({fp / neg, tp / pos, score[order[i]]});
    i = j + 1;
  }
  return out;
}

// Predicted class per row of a posterior/score matrix; first max wins ties.
inline std::vector<int> argmax_rows(const Mat& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index j = 0;
    m.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

}  // namespace proia
