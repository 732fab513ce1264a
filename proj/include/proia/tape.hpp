#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "proia/common.hpp"

namespace proia::ad {

// Reverse-mode autodiff over dense matrices. Nodes are created in topological
// order on a Tape; backward() walks them in reverse. Values are double
// precision throughout, which the finite-difference checks rely on.
class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool grad_ready = false;
    std::function<void(Tape&)> backward;  // closure captures parent ids
  };

  const Mat& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

  Mat& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_ready) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
    return n.grad;
  }

  const Mat& grad(Var v) {
    require(nodes_[static_cast<std::size_t>(v.id)].requires_grad,
            "tape: gradient requested for non-differentiable node");
    return grad_ref(v.id);
  }

  Var leaf(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Mat value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

  void backward(Var loss) {
    require(val(loss).size() == 1, "tape: backward expects a scalar loss");
    grad_ref(loss.id)(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.grad_ready && n.backward) n.backward(*this);
    }
  }

  // ---- elementwise and linear ops ----

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    return make(val(a) + val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return make(val(a) - val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, -g);
    });
  }

  Var neg(Var a) {
    return make(-val(a), {a}, [a](Tape& t, const Mat& g) { t.accum(a, -g); });
  }

  Var scale(Var a, double s) {
    return make(val(a) * s, {a}, [a, s](Tape& t, const Mat& g) { t.accum(a, g * s); });
  }

  Var add_const(Var a, double c) {
    return make((val(a).array() + c).matrix(), {a},
                [a](Tape& t, const Mat& g) { t.accum(a, g); });
  }

  Var cwise_mul(Var a, Var b) {
    check_same_shape(a, b, "cwise_mul");
    return make(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g.cwiseProduct(t.val(b)));
      t.accum(b, g.cwiseProduct(t.val(a)));
    });
  }

  Var matmul(Var a, Var b) {
    require(val(a).cols() == val(b).rows(), "matmul: inner dimension mismatch");
    return make(val(a) * val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g * t.val(b).transpose());
      t.accum(b, t.val(a).transpose() * g);
    });
  }

  Var transpose(Var a) {
    return make(val(a).transpose(), {a},
                [a](Tape& t, const Mat& g) { t.accum(a, g.transpose()); });
  }

  // a: N x d, b: 1 x d, broadcast over rows.
  Var add_rowvec(Var a, Var b) {
    require(val(b).rows() == 1 && val(b).cols() == val(a).cols(), "add_rowvec: shape mismatch");
    Mat out = val(a);
    out.rowwise() += val(b).row(0);
    return make(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(b, g.colwise().sum());
    });
  }

  // a: N x d, s: 1 x 1, broadcast scalar.
  Var add_scalar_var(Var a, Var s) {
    require(val(s).size() == 1, "add_scalar_var: s must be 1x1");
    return make((val(a).array() + val(s)(0, 0)).matrix(), {a, s}, [a, s](Tape& t, const Mat& g) {
      t.accum(a, g);
      t.accum(s, Mat::Constant(1, 1, g.sum()));
    });
  }

  // ---- nonlinearities ----

  Var relu(Var a) {
    return make(val(a).cwiseMax(0.0), {a}, [a](Tape& t, const Mat& g) {
      t.accum(a, (t.val(a).array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
    });
  }

  Var leaky_relu(Var a, double slope) {
    const Mat& x = val(a);
    Mat out = (x.array() > 0.0).select(x, x * slope);
    return make(std::move(out), {a}, [a, slope](Tape& t, const Mat& g) {
      t.accum(a, (t.val(a).array() > 0.0).select(g, g * slope));
    });
  }

  Var sigmoid(Var a) {
    Mat y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
    Var out = make(std::move(y), {a}, nullptr);
    set_backward(out, [a, out](Tape& t) {
      const Mat& g = t.grad_ref(out.id);
      const Mat& y2 = t.val(out);
      t.accum(a, g.cwiseProduct((y2.array() * (1.0 - y2.array())).matrix()));
    });
    return out;
  }

  Var tanh_(Var a) {
    Mat y = val(a).array().tanh().matrix();
    Var out = make(std::move(y), {a}, nullptr);
    set_backward(out, [a, out](Tape& t) {
      const Mat& g = t.grad_ref(out.id);
      const Mat& y2 = t.val(out);
      t.accum(a, g.cwiseProduct((1.0 - y2.array().square()).matrix()));
    });
    return out;
  }

  Var exp_(Var a) {
    Mat y = val(a).array().exp().matrix();
    Var out = make(std::move(y), {a}, nullptr);
    set_backward(out, [a, out](Tape& t) {
      t.accum(a, t.grad_ref(out.id).cwiseProduct(t.val(out)));
    });
    return out;
  }

  Var log_(Var a) {
    return make(val(a).array().log().matrix(), {a}, [a](Tape& t, const Mat& g) {
      t.accum(a, g.cwiseQuotient(t.val(a)));
    });
  }

  // Gradient passes through strictly inside [lo, hi] and is zero outside.
  Var clamp(Var a, double lo, double hi) {
    return make(val(a).cwiseMax(lo).cwiseMin(hi), {a}, [a, lo, hi](Tape& t, const Mat& g) {
      const Mat& x = t.val(a);
      Mat masked = ((x.array() >= lo) && (x.array() <= hi))
                       .select(g, Mat::Zero(g.rows(), g.cols()));
      t.accum(a, masked);
    });
  }

  // ---- reductions ----

  Var sum_all(Var a) {
    return make(Mat::Constant(1, 1, val(a).sum()), {a}, [a](Tape& t, const Mat& g) {
      const Mat& x = t.val(a);
      t.accum(a, Mat::Constant(x.rows(), x.cols(), g(0, 0)));
    });
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size())); }

  // Row sums: N x d -> N x 1.
  Var sum_rows(Var a) {
    return make(val(a).rowwise().sum(), {a}, [a](Tape& t, const Mat& g) {
      const Mat& x = t.val(a);
      t.accum(a, g * Mat::Ones(1, x.cols()));
    });
  }

  // Row dots: (N x d, N x d) -> N x 1.
  Var row_dot(Var a, Var b) {
    check_same_shape(a, b, "row_dot");
    Mat out = val(a).cwiseProduct(val(b)).rowwise().sum();
    return make(std::move(out), {a, b}, [a, b](Tape& t, const Mat& g) {
      t.accum(a, t.val(b).array().colwise() * g.col(0).array());
      t.accum(b, t.val(a).array().colwise() * g.col(0).array());
    });
  }

  // ---- structured ops ----

  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      require(val(p).rows() == rows, "concat_cols: row mismatch");
      cols += val(p).cols();
    }
    Mat out(rows, cols);
    Eigen::Index off = 0;
    std::vector<Eigen::Index> offsets;
    for (Var p : parts) {
      out.middleCols(off, val(p).cols()) = val(p);
      offsets.push_back(off);
      off += val(p).cols();
    }
    auto ps = parts;
    return make(std::move(out), parts, [ps, offsets](Tape& t, const Mat& g) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        t.accum(ps[i], g.middleCols(offsets[i], t.val(ps[i]).cols()));
      }
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    for (int j : idx) require(j >= 0 && j < val(a).rows(), "gather_rows: index out of range");
    Mat out(static_cast<Eigen::Index>(idx.size()), val(a).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = val(a).row(idx[i]);
    return make(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Mat& g) {
      Mat ga = Mat::Zero(t.val(a).rows(), t.val(a).cols());
      for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      t.accum(a, ga);
    });
  }

  // out.row(dst[e]) += w(e) * z.row(src[e]); out has out_rows rows.
  Var weighted_gather_sum(Var z, const std::vector<int>& dst, const std::vector<int>& src,
                          Var w, int out_rows) {
    require(dst.size() == src.size(), "weighted_gather_sum: dst/src size mismatch");
    require(val(w).rows() == static_cast<Eigen::Index>(dst.size()) && val(w).cols() == 1,
            "weighted_gather_sum: w must be E x 1");
    Mat out = Mat::Zero(out_rows, val(z).cols());
    const Mat& zv = val(z);
    const Mat& wv = val(w);
    for (std::size_t e = 0; e < dst.size(); ++e) {
      out.row(dst[e]) += wv(static_cast<Eigen::Index>(e), 0) * zv.row(src[e]);
    }
    return make(std::move(out), {z, w}, [z, w, dst, src](Tape& t, const Mat& g) {
      const Mat& zv2 = t.val(z);
      const Mat& wv2 = t.val(w);
      Mat gz = Mat::Zero(zv2.rows(), zv2.cols());
      Mat gw = Mat::Zero(wv2.rows(), 1);
      for (std::size_t e = 0; e < dst.size(); ++e) {
        gz.row(src[e]) += wv2(static_cast<Eigen::Index>(e), 0) * g.row(dst[e]);
        gw(static_cast<Eigen::Index>(e), 0) = zv2.row(src[e]).dot(g.row(dst[e]));
      }
      t.accum(z, gz);
      t.accum(w, gw);
    });
  }

  // Softmax within consecutive segments of an E x 1 score vector. offsets has
  // one entry per segment boundary: segment s covers [offsets[s], offsets[s+1]).
  Var segment_softmax(Var s, const std::vector<int>& offsets) {
    const Mat& sv = val(s);
    require(sv.cols() == 1, "segment_softmax: scores must be E x 1");
    require(!offsets.empty() && offsets.back() == sv.rows(), "segment_softmax: bad offsets");
    Mat out(sv.rows(), 1);
    for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
      const int lo = offsets[seg], hi = offsets[seg + 1];
      if (lo == hi) continue;
      double mx = sv.block(lo, 0, hi - lo, 1).maxCoeff();
      double z = 0.0;
      for (int e = lo; e < hi; ++e) z += std::exp(sv(e, 0) - mx);
      for (int e = lo; e < hi; ++e) out(e, 0) = std::exp(sv(e, 0) - mx) / z;
    }
    Var outv = make(std::move(out), {s}, nullptr);
    set_backward(outv, [s, outv, offsets](Tape& t) {
      const Mat& g = t.grad_ref(outv.id);
      const Mat& w = t.val(outv);
      Mat gs = Mat::Zero(w.rows(), 1);
      for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
        const int lo = offsets[seg], hi = offsets[seg + 1];
        if (lo == hi) continue;
        double dot = 0.0;
        for (int e = lo; e < hi; ++e) dot += w(e, 0) * g(e, 0);
        for (int e = lo; e < hi; ++e) gs(e, 0) = w(e, 0) * (g(e, 0) - dot);
      }
      t.accum(s, gs);
    });
    return outv;
  }

  Var row_softmax(Var a) {
    const Mat& x = val(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mx = x.row(i).maxCoeff();
      Eigen::ArrayXd e = (x.row(i).array() - mx).exp();
      out.row(i) = (e / e.sum()).matrix();
    }
    Var outv = make(std::move(out), {a}, nullptr);
    set_backward(outv, [a, outv](Tape& t) {
      const Mat& g = t.grad_ref(outv.id);
      const Mat& y = t.val(outv);
      Mat ga(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = y.row(i).dot(g.row(i));
        ga.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
      t.accum(a, ga);
    });
    return outv;
  }

  // Mean cross-entropy of row-softmax(logits) against integer labels.
  Var cross_entropy_mean(Var logits, const std::vector<int>& labels) {
    const Mat& x = val(logits);
    require(static_cast<Eigen::Index>(labels.size()) == x.rows(), "cross_entropy: label count mismatch");
    Mat probs(x.rows(), x.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      require(y >= 0 && y < x.cols(), "cross_entropy: label out of range");
      const double mx = x.row(i).maxCoeff();
      Eigen::ArrayXd e = (x.row(i).array() - mx).exp();
      const double lse = std::log(e.sum()) + mx;
      probs.row(i) = (e / e.sum()).matrix();
      total += lse - x(i, y);
    }
    const double n = static_cast<double>(x.rows());
    Var out = leaf(Mat::Constant(1, 1, total / n), false);
    nodes_.back().requires_grad = nodes_[static_cast<std::size_t>(logits.id)].requires_grad;
    Var outv{this, out.id};
    set_backward(outv, [logits, outv, labels, probs = std::move(probs), n](Tape& t) {
      const double g = t.grad_ref(outv.id)(0, 0);
      Mat gl = probs;
      for (Eigen::Index i = 0; i < gl.rows(); ++i) gl(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      t.accum(logits, gl * (g / n));
    });
    return outv;
  }

  // Rows scaled to unit L2 norm; eps keeps the division finite.
  Var l2_normalize_rows(Var a, double eps = 1e-12) {
    const Mat& x = val(a);
    Eigen::ArrayXd norms = x.rowwise().norm().array();
    Mat out = (x.array().colwise() / (norms + eps)).matrix();
    return make(std::move(out), {a}, [a, eps](Tape& t, const Mat& g) {
      const Mat& x2 = t.val(a);
      Mat ga(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i) {
        const double n = x2.row(i).norm();
        const double d = n + eps;
        const double xg = x2.row(i).dot(g.row(i));
        ga.row(i) = g.row(i) / d;
        if (n > 0.0) ga.row(i) -= x2.row(i) * (xg / (n * d * d));
      }
      t.accum(a, ga);
    });
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;

  void check_same_shape(Var a, Var b, const char* op) const {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
            std::string(op) + ": shape mismatch");
  }

  void accum(Var v, const Mat& g) {
    if (nodes_[static_cast<std::size_t>(v.id)].requires_grad) grad_ref(v.id) += g;
  }

  template <typename G>
  void accum(Var v, const Eigen::ArrayBase<G>& g) {
    accum(v, Mat(g.matrix()));
  }

  void set_backward(Var v, std::function<void(Tape&)> fn) {
    nodes_[static_cast<std::size_t>(v.id)].backward = std::move(fn);
  }

  Var make(Mat value, const std::vector<Var>& parents,
           std::function<void(Tape&, const Mat&)> pull) {
    bool rg = false;
    for (Var p : parents) rg = rg || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    Var out{this, static_cast<int>(nodes_.size()) - 1};
    if (rg && pull) {
      set_backward(out, [out, pull = std::move(pull)](Tape& t) { pull(t, t.grad_ref(out.id)); });
    }
    return out;
  }
};

}  // namespace proia::ad
