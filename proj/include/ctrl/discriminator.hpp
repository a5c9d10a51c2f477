#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ctrl/adam.hpp"
#include "ctrl/autodiff.hpp"
#include "ctrl/common.hpp"
#include "ctrl/mixup.hpp"
#include "ctrl/mlp.hpp"
#include "ctrl/replay.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

// How the bias correction combines the endpoint energies: interpolate the
// residual vectors (default; exact nullity at the endpoints holds
// componentwise) or the already-collapsed scalar distances.
enum class CorrectionKind { vector_residual, scalar_energy };

// Streaming per-dimension mean/variance (Chan's parallel update), used by
// the optional input/target normalizer.
struct RunningMoments {
  Vec mean;
  Vec m2;
  long count = 0;

  RunningMoments() = default;
  explicit RunningMoments(long dim)
      : mean(Vec::Zero(dim)), m2(Vec::Zero(dim)) {}

  void update(const Mat& rows) {
    const long n = rows.rows();
    if (n == 0) return;
    const Vec bmean = rows.colwise().mean().transpose();
    Vec bm2 = Vec::Zero(rows.cols());
    for (long i = 0; i < n; ++i) {
      const Vec d = rows.row(i).transpose() - bmean;
      bm2.array() += d.array().square();
    }
    if (count == 0) {
      mean = bmean;
      m2 = bm2;
      count = n;
      return;
    }
    const Vec delta = bmean - mean;
    const double total = static_cast<double>(count + n);
    mean.array() += delta.array() * (static_cast<double>(n) / total);
    m2.array() += bm2.array() + delta.array().square() *
                                    (static_cast<double>(count) *
                                     static_cast<double>(n) / total);
    count += n;
  }

  // 1/sqrt(var + 1e-8); ones until two samples have been seen.
  Vec scale() const {
    if (count < 2) return Vec::Ones(mean.size());
    return ((m2 / static_cast<double>(count)).array() + 1e-8)
        .rsqrt()
        .matrix();
  }

  Vec shift() const {
    return count < 2 ? Vec::Zero(mean.size()).eval() : mean;
  }
};

// Learned dynamics model f mapping x=(s||a) to a prediction of y=(s'||r||d).
// The energy of a transition is the residual vector f(x)-y; its squared L2
// norm is the distance from the authentic manifold. For an interpolated
// transition the corrected distance subtracts the interpolation of the
// endpoint energies first, which cancels the model's own error at the
// endpoints regardless of the parameters.
class Discriminator {
 public:
  Discriminator(int obs_dim, int act_dim, const std::vector<int>& hidden,
                RngStream& rng, double lr = 3e-4, bool normalize = false)
      : obs_dim_(obs_dim),
        act_dim_(act_dim),
        normalize_(normalize),
        x_mom_(obs_dim + act_dim),
        y_mom_(obs_dim + 2) {
    require(obs_dim >= 1 && act_dim >= 1,
            "discriminator: dims must be positive");
    std::vector<int> dims;
    dims.push_back(obs_dim + act_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(obs_dim + 2);
    net_ = Mlp::make(std::move(dims), rng);
    adam_ = AdamState(net_, lr);
  }

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  int in_dim() const { return obs_dim_ + act_dim_; }
  int out_dim() const { return obs_dim_ + 2; }
  bool normalized() const { return normalize_; }

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  AdamState& adam() { return adam_; }
  RunningMoments& x_moments() { return x_mom_; }
  RunningMoments& y_moments() { return y_mom_; }

  // Residual vector f(x)-y.
  template <class T>
  Vec energy(const T& t) const {
    const Vec x = normalize_x(x_of(t));
    const Vec y = normalize_y(y_of(t));
    return net_.forward(x) - y;
  }

  // Squared L2 norm of the residual.
  template <class T>
  double distance(const T& t) const {
    return energy(t).squaredNorm();
  }

  // Distance of the interpolated transition after subtracting the
  // eps-interpolation of its endpoints' energies.
  double corrected_distance(const ContinuousTransition& tc,
                            CorrectionKind kind =
                                CorrectionKind::vector_residual) const {
    require(tc.source.has_value(),
            "corrected distance: transition carries no source pair");
    const Transition& first = tc.source->first;
    const Transition& second = tc.source->second;
    // The interpolated endpoint term uses the same clamped lerp as mix():
    // rounding must not escape the convex hull, so identical endpoints
    // cancel exactly.
    if (kind == CorrectionKind::vector_residual) {
      const Vec e = energy(tc);
      const Vec e0 = energy(first);
      const Vec e1 = energy(second);
      return (e - detail::lerp_clamped(e0, e1, tc.eps)).squaredNorm();
    }
    const double d = distance(tc);
    const double d0 = distance(first);
    const double d1 = distance(second);
    const double r = d - detail::lerp_clamped(d0, d1, tc.eps);
    return r * r;
  }

  // Corrected distances for a whole mixed batch through one stacked forward
  // pass (mixed rows, then first sources, then second sources).
  Vec corrected_batch(const std::vector<ContinuousTransition>& batch,
                      CorrectionKind kind =
                          CorrectionKind::vector_residual) const {
    require(!batch.empty(), "corrected batch: empty batch");
    const long n = static_cast<long>(batch.size());
    Mat x(3 * n, in_dim());
    Mat y(3 * n, out_dim());
    for (long i = 0; i < n; ++i) {
      const ContinuousTransition& tc = batch[static_cast<std::size_t>(i)];
      require(tc.source.has_value(),
              "corrected batch: transition carries no source pair");
      x.row(i) = x_of(tc).transpose();
      y.row(i) = y_of(tc).transpose();
      x.row(n + i) = x_of(tc.source->first).transpose();
      y.row(n + i) = y_of(tc.source->first).transpose();
      x.row(2 * n + i) = x_of(tc.source->second).transpose();
      y.row(2 * n + i) = y_of(tc.source->second).transpose();
    }
    const Mat residual = net_.forward(normalize_x_rows(x)) -
                         normalize_y_rows(y);
    Vec out(n);
    for (long i = 0; i < n; ++i) {
      const double eps = batch[static_cast<std::size_t>(i)].eps;
      if (kind == CorrectionKind::vector_residual) {
        const Vec mixed = residual.row(i).transpose();
        const Vec e0 = residual.row(n + i).transpose();
        const Vec e1 = residual.row(2 * n + i).transpose();
        out(i) = (mixed - detail::lerp_clamped(e0, e1, eps)).squaredNorm();
      } else {
        const double d = residual.row(i).squaredNorm();
        const double d0 = residual.row(n + i).squaredNorm();
        const double d1 = residual.row(2 * n + i).squaredNorm();
        const double r = d - detail::lerp_clamped(d0, d1, eps);
        out(i) = r * r;
      }
    }
    return out;
  }

  // One Adam step on the mean distance over an authentic batch; returns the
  // pre-step mean loss.
  double train_step(const std::vector<Transition>& batch) {
    require(!batch.empty(), "discriminator train: empty batch");
    const long n = static_cast<long>(batch.size());
    Mat x(n, in_dim());
    Mat y(n, out_dim());
    for (long i = 0; i < n; ++i) {
      const Transition& t = batch[static_cast<std::size_t>(i)];
      require(t.d == 0.0 || t.d == 1.0,
              "discriminator train: batch must hold stored transitions");
      x.row(i) = x_of(t).transpose();
      y.row(i) = y_of(t).transpose();
    }
    if (normalize_) {
      x_mom_.update(x);
      y_mom_.update(y);
    }
    Tape tape;
    const MlpRef ref = attach(tape, net_, true);
    const Var input = tape.leaf(normalize_x_rows(x));
    const Var target = tape.leaf(normalize_y_rows(y));
    const Var pred = forward(tape, ref, input);
    const Var loss = tape.mean(tape.rowsum(tape.square(tape.sub(pred, target))));
    const double out = tape.scalar(loss);
    tape.backward(loss);
    adam_.step(net_, read_grads(tape, ref));
    return out;
  }

 private:
  template <class T>
  Vec x_of(const T& t) const {
    require(t.s.size() == obs_dim_ && t.a.size() == act_dim_,
            "discriminator: transition dim mismatch");
    Vec x(in_dim());
    x << t.s, t.a;
    return x;
  }

  template <class T>
  Vec y_of(const T& t) const {
    require(t.s_next.size() == obs_dim_,
            "discriminator: next-state dim mismatch");
    Vec y(out_dim());
    y << t.s_next, t.r, t.d;
    return y;
  }

  Vec normalize_x(const Vec& x) const {
    if (!normalize_) return x;
    return ((x - x_mom_.shift()).array() * x_mom_.scale().array()).matrix();
  }
  Vec normalize_y(const Vec& y) const {
    if (!normalize_) return y;
    return ((y - y_mom_.shift()).array() * y_mom_.scale().array()).matrix();
  }
  Mat normalize_x_rows(const Mat& x) const {
    if (!normalize_) return x;
    return ((x.rowwise() - x_mom_.shift().transpose()).array().rowwise() *
            x_mom_.scale().transpose().array())
        .matrix();
  }
  Mat normalize_y_rows(const Mat& y) const {
    if (!normalize_) return y;
    return ((y.rowwise() - y_mom_.shift().transpose()).array().rowwise() *
            y_mom_.scale().transpose().array())
        .matrix();
  }

  int obs_dim_ = 0;
  int act_dim_ = 0;
  bool normalize_ = false;
  Mlp net_;
  AdamState adam_;
  RunningMoments x_mom_, y_mom_;
};

}  // namespace ctrl
