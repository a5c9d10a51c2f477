#pragma once

#include <utility>
#include <vector>

#include "ctrl/autodiff.hpp"
#include "ctrl/common.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

// Fully connected net: rectified hidden layers, identity output layer.
// Weights init uniform in +-1/sqrt(fan_in), row-major draw order, then the
// bias, layer by layer; the draw order is part of the determinism contract.
struct Mlp {
  std::vector<int> dims;   // layer widths, input first
  std::vector<Mat> w;      // w[l]: dims[l+1] x dims[l]
  std::vector<Vec> b;      // b[l]: dims[l+1]

  static Mlp make(std::vector<int> layer_dims, RngStream& rng) {
    require(layer_dims.size() >= 2, "mlp: need at least input and output dims");
    for (int d : layer_dims) require(d >= 1, "mlp: dims must be positive");
    Mlp net;
    net.dims = std::move(layer_dims);
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
      const int in = net.dims[l];
      const int out = net.dims[l + 1];
      const double k = 1.0 / std::sqrt(static_cast<double>(in));
      Mat W(out, in);
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) W(i, j) = rng.uniform(-k, k);
      Vec B(out);
      for (int i = 0; i < out; ++i) B(i) = rng.uniform(-k, k);
      net.w.push_back(std::move(W));
      net.b.push_back(std::move(B));
    }
    return net;
  }

  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }
  std::size_t layers() const { return w.size(); }

  Mat forward(const Mat& x) const {
    require(x.cols() == in_dim(), "mlp forward: input dim mismatch");
    if (!x.allFinite()) throw InvalidInput("mlp forward: non-finite input");
    Mat h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
      Mat z = h * w[l].transpose();
      z.rowwise() += b[l].transpose();
      if (l + 1 < w.size()) z = z.array().max(0.0).matrix();
      h = std::move(z);
    }
    if (!h.allFinite()) throw NumericError("mlp_forward", "non-finite output");
    return h;
  }

  Vec forward(const Vec& x) const {
    Mat row = x.transpose();
    return forward(row).row(0).transpose();
  }
};

// On-tape view of an Mlp: weight/bias leaves plus the forward graph.
struct MlpRef {
  std::vector<Var> w;
  std::vector<Var> b;
};

inline MlpRef attach(Tape& tape, const Mlp& net, bool train) {
  MlpRef ref;
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    ref.w.push_back(tape.leaf(net.w[l], train));
    ref.b.push_back(tape.leaf(net.b[l].transpose(), train));
  }
  return ref;
}

inline Var forward(Tape& tape, const MlpRef& ref, Var x) {
  Var h = x;
  for (std::size_t l = 0; l < ref.w.size(); ++l) {
    h = tape.linear(h, ref.w[l], ref.b[l]);
    if (l + 1 < ref.w.size()) h = tape.relu(h);
  }
  return h;
}

struct MlpGrads {
  std::vector<Mat> w;
  std::vector<Vec> b;
};

inline MlpGrads read_grads(const Tape& tape, const MlpRef& ref) {
  MlpGrads g;
  for (std::size_t l = 0; l < ref.w.size(); ++l) {
    g.w.push_back(tape.grad(ref.w[l]));
    g.b.push_back(tape.grad(ref.b[l]).row(0).transpose());
  }
  return g;
}

}  // namespace ctrl
