#pragma once

#include <cmath>
#include <vector>

#include "proia/common.hpp"

namespace proia {

// Adam over a fixed list of parameter matrices. Moment buffers are keyed by
// position, so the parameter list must not change between steps.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
    require(params.size() == grads.size(), "adam: params/grads size mismatch");
    if (m_.empty()) {
      for (Mat* p : params) {
        m_.push_back(Mat::Zero(p->rows(), p->cols()));
        v_.push_back(Mat::Zero(p->rows(), p->cols()));
      }
    }
    require(m_.size() == params.size(), "adam: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat& g = *grads[i];
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square()).matrix();
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      params[i]->array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace proia
