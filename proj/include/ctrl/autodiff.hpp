#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ctrl/common.hpp"

namespace ctrl {

// Reverse-mode tape over batched matrices (rows = batch items). A tape is
// built per loss evaluation, swept backward once, then cleared. Every op
// checks its output for NaN/Inf and raises NumericError naming itself, so a
// diverging loss fails loudly at the op that produced it.
struct Var {
  int id = -1;
};

class Tape {
  enum class Op {
    leaf,
    linear,
    add,
    sub,
    mul,
    affine,
    relu,
    tanh_,
    exp_,
    log_,
    square,
    clamp,
    min_,
    rowsum,
    sum,
    mean,
    concat_cols,
    slice_cols,
    scale_cols,
    shift_cols,
  };

  struct Node {
    Mat value;
    Mat grad;
    Op op = Op::leaf;
    int a = -1, b = -1, c = -1;
    double p0 = 0.0, p1 = 0.0;
    Vec vparam;
    bool requires_grad = false;
  };

 public:
  Var leaf(Mat value, bool requires_grad = false) {
    if (!value.allFinite()) throw InvalidInput("leaf: non-finite input");
    return push(Op::leaf, std::move(value), -1, -1, -1, requires_grad);
  }

  // x: n*in, w: out*in, b: 1*out row. Returns x*w^T + b per row.
  Var linear(Var x, Var w, Var b) {
    const Mat& X = value(x);
    const Mat& W = value(w);
    const Mat& B = value(b);
    require(X.cols() == W.cols(), "linear: input/weight dim mismatch");
    require(B.rows() == 1 && B.cols() == W.rows(),
            "linear: bias shape mismatch");
    Mat y = X * W.transpose();
    y.rowwise() += B.row(0);
    return push(Op::linear, std::move(y), x.id, w.id, b.id,
                any_grad(x, w, b), "linear");
  }

  Var add(Var a, Var b) { return binary(Op::add, a, b, "add"); }
  Var sub(Var a, Var b) { return binary(Op::sub, a, b, "sub"); }
  Var mul(Var a, Var b) { return binary(Op::mul, a, b, "mul"); }

  Var affine(Var x, double scale, double shift) {
    Mat y = (value(x).array() * scale + shift).matrix();
    Var v = push(Op::affine, std::move(y), x.id, -1, -1, any_grad(x), "affine");
    node(v.id).p0 = scale;
    node(v.id).p1 = shift;
    return v;
  }

  Var relu(Var x) {
    Mat y = value(x).array().max(0.0).matrix();
    return push(Op::relu, std::move(y), x.id, -1, -1, any_grad(x), "relu");
  }

  Var tanh(Var x) {
    Mat y = value(x).array().tanh().matrix();
    return push(Op::tanh_, std::move(y), x.id, -1, -1, any_grad(x), "tanh");
  }

  Var exp(Var x) {
    Mat y = value(x).array().exp().matrix();
    return push(Op::exp_, std::move(y), x.id, -1, -1, any_grad(x), "exp");
  }

  Var log(Var x) {
    Mat y = value(x).array().log().matrix();
    return push(Op::log_, std::move(y), x.id, -1, -1, any_grad(x), "log");
  }

  Var square(Var x) {
    Mat y = value(x).array().square().matrix();
    return push(Op::square, std::move(y), x.id, -1, -1, any_grad(x), "square");
  }

  // Gradient passes inside [lo,hi] (boundary included), zero outside.
  Var clamp(Var x, double lo, double hi) {
    require(lo <= hi, "clamp: lo must be <= hi");
    Mat y = value(x).array().max(lo).min(hi).matrix();
    Var v = push(Op::clamp, std::move(y), x.id, -1, -1, any_grad(x), "clamp");
    node(v.id).p0 = lo;
    node(v.id).p1 = hi;
    return v;
  }

  // Elementwise min; on ties the gradient goes to the first argument.
  Var cwise_min(Var a, Var b) {
    same_shape(a, b, "min");
    Mat y = value(a).cwiseMin(value(b));
    return push(Op::min_, std::move(y), a.id, b.id, -1, any_grad(a, b), "min");
  }

  Var rowsum(Var x) {
    Mat y = value(x).rowwise().sum();
    return push(Op::rowsum, std::move(y), x.id, -1, -1, any_grad(x), "rowsum");
  }

  Var sum(Var x) {
    Mat y(1, 1);
    y(0, 0) = value(x).sum();
    return push(Op::sum, std::move(y), x.id, -1, -1, any_grad(x), "sum");
  }

  Var mean(Var x) {
    Mat y(1, 1);
    y(0, 0) = value(x).mean();
    return push(Op::mean, std::move(y), x.id, -1, -1, any_grad(x), "mean");
  }

  Var concat_cols(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    require(A.rows() == B.rows(), "concat_cols: row mismatch");
    Mat y(A.rows(), A.cols() + B.cols());
    y << A, B;
    return push(Op::concat_cols, std::move(y), a.id, b.id, -1, any_grad(a, b),
                "concat_cols");
  }

  Var slice_cols(Var x, int start, int count) {
    const Mat& X = value(x);
    require(start >= 0 && count >= 1 && start + count <= X.cols(),
            "slice_cols: out of range");
    Mat y = X.middleCols(start, count);
    Var v = push(Op::slice_cols, std::move(y), x.id, -1, -1, any_grad(x),
                 "slice_cols");
    node(v.id).p0 = start;
    node(v.id).p1 = count;
    return v;
  }

  // y(i,j) = x(i,j) * s(j): per-column constant scaling.
  Var scale_cols(Var x, Vec s) {
    require(s.size() == value(x).cols(), "scale_cols: size mismatch");
    Mat y =
        (value(x).array().rowwise() * s.transpose().array()).matrix();
    Var v = push(Op::scale_cols, std::move(y), x.id, -1, -1, any_grad(x),
                 "scale_cols");
    node(v.id).vparam = std::move(s);
    return v;
  }

  // y(i,j) = x(i,j) + s(j): per-column constant shift.
  Var shift_cols(Var x, Vec s) {
    require(s.size() == value(x).cols(), "shift_cols: size mismatch");
    Mat y =
        (value(x).array().rowwise() + s.transpose().array()).matrix();
    Var v = push(Op::shift_cols, std::move(y), x.id, -1, -1, any_grad(x),
                 "shift_cols");
    node(v.id).vparam = std::move(s);
    return v;
  }

  const Mat& value(Var v) const { return node(v.id).value; }

  double scalar(Var v) const {
    const Mat& m = value(v);
    require(m.size() == 1, "scalar: not a 1x1 value");
    return m(0, 0);
  }

  const Mat& grad(Var v) const {
    const Node& n = node(v.id);
    require(n.requires_grad, "grad: node does not require gradients");
    require(swept_, "grad: backward has not run");
    return n.grad;
  }

  // Seeds d(loss)=1 and sweeps the tape once, newest to oldest.
  void backward(Var loss) {
    Node& L = node(loss.id);
    require(L.value.size() == 1, "backward: loss must be scalar");
    require(L.requires_grad, "backward: loss does not depend on parameters");
    if (!std::isfinite(L.value(0, 0)))
      throw NumericError("backward", "loss is not finite");
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    L.grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) step_back(i);
    swept_ = true;
  }

  void clear() {
    nodes_.clear();
    swept_ = false;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static bool any_grad() { return false; }
  template <class... Rest>
  bool any_grad(Var v, Rest... rest) const {
    return node(v.id).requires_grad || any_grad(rest...);
  }

  Node& node(int id) {
    require(id >= 0 && id < static_cast<int>(nodes_.size()),
            "tape: bad var id");
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(int id) const {
    require(id >= 0 && id < static_cast<int>(nodes_.size()),
            "tape: bad var id");
    return nodes_[static_cast<std::size_t>(id)];
  }

  void same_shape(Var a, Var b, const char* op) {
    require(value(a).rows() == value(b).rows() &&
                value(a).cols() == value(b).cols(),
            std::string(op) + ": shape mismatch");
  }

  Var binary(Op op, Var a, Var b, const char* name) {
    same_shape(a, b, name);
    Mat y;
    switch (op) {
      case Op::add: y = value(a) + value(b); break;
      case Op::sub: y = value(a) - value(b); break;
      case Op::mul: y = value(a).cwiseProduct(value(b)); break;
      default: throw InvalidInput("binary: bad op");
    }
    return push(op, std::move(y), a.id, b.id, -1, any_grad(a, b), name);
  }

  Var push(Op op, Mat value, int a, int b, int c, bool req,
           const char* name = nullptr) {
    if (name != nullptr && !value.allFinite())
      throw NumericError(name, "non-finite output");
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.requires_grad = req;
    nodes_.push_back(std::move(n));
    swept_ = false;
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  bool wants(int id) const { return id >= 0 && node(id).requires_grad; }

  void step_back(int i) {
    Node& n = node(i);
    if (!n.requires_grad || n.op == Op::leaf) return;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::linear: {
        const Mat& X = node(n.a).value;
        const Mat& W = node(n.b).value;
        if (wants(n.a)) node(n.a).grad.noalias() += g * W;
        if (wants(n.b)) node(n.b).grad.noalias() += g.transpose() * X;
        if (wants(n.c)) node(n.c).grad.row(0) += g.colwise().sum();
        break;
      }
      case Op::add:
        if (wants(n.a)) node(n.a).grad += g;
        if (wants(n.b)) node(n.b).grad += g;
        break;
      case Op::sub:
        if (wants(n.a)) node(n.a).grad += g;
        if (wants(n.b)) node(n.b).grad -= g;
        break;
      case Op::mul:
        if (wants(n.a)) node(n.a).grad += g.cwiseProduct(node(n.b).value);
        if (wants(n.b)) node(n.b).grad += g.cwiseProduct(node(n.a).value);
        break;
      case Op::affine:
        if (wants(n.a)) node(n.a).grad += g * n.p0;
        break;
      case Op::relu:
        if (wants(n.a)) {
          const Mat& X = node(n.a).value;
          node(n.a).grad.array() +=
              g.array() * (X.array() > 0.0).cast<double>();
        }
        break;
      case Op::tanh_:
        if (wants(n.a))
          node(n.a).grad.array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::exp_:
        if (wants(n.a)) node(n.a).grad.array() += g.array() * n.value.array();
        break;
      case Op::log_:
        if (wants(n.a))
          node(n.a).grad.array() += g.array() / node(n.a).value.array();
        break;
      case Op::square:
        if (wants(n.a))
          node(n.a).grad.array() += 2.0 * g.array() * node(n.a).value.array();
        break;
      case Op::clamp:
        if (wants(n.a)) {
          const Mat& X = node(n.a).value;
          node(n.a).grad.array() +=
              g.array() * ((X.array() >= n.p0) && (X.array() <= n.p1))
                              .cast<double>();
        }
        break;
      case Op::min_: {
        const Mat& A = node(n.a).value;
        const Mat& B = node(n.b).value;
        Mat pick_a = (A.array() <= B.array()).cast<double>().matrix();
        if (wants(n.a)) node(n.a).grad.array() += g.array() * pick_a.array();
        if (wants(n.b))
          node(n.b).grad.array() += g.array() * (1.0 - pick_a.array());
        break;
      }
      case Op::rowsum:
        if (wants(n.a))
          node(n.a).grad.colwise() += g.col(0);
        break;
      case Op::sum:
        if (wants(n.a)) node(n.a).grad.array() += g(0, 0);
        break;
      case Op::mean:
        if (wants(n.a))
          node(n.a).grad.array() +=
              g(0, 0) / static_cast<double>(node(n.a).value.size());
        break;
      case Op::concat_cols: {
        const auto ac = node(n.a).value.cols();
        if (wants(n.a)) node(n.a).grad += g.leftCols(ac);
        if (wants(n.b)) node(n.b).grad += g.rightCols(g.cols() - ac);
        break;
      }
      case Op::slice_cols:
        if (wants(n.a))
          node(n.a).grad.middleCols(static_cast<int>(n.p0),
                                    static_cast<int>(n.p1)) += g;
        break;
      case Op::scale_cols:
        if (wants(n.a))
          node(n.a).grad.array() +=
              g.array().rowwise() * n.vparam.transpose().array();
        break;
      case Op::shift_cols:
        if (wants(n.a)) node(n.a).grad += g;
        break;
      case Op::leaf:
        break;
    }
  }

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace ctrl
