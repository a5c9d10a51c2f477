#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ctrl/adam.hpp"
#include "ctrl/agent.hpp"
#include "ctrl/autodiff.hpp"
#include "ctrl/common.hpp"
#include "ctrl/mlp.hpp"
#include "ctrl/rng.hpp"
#include "ctrl/serialize.hpp"

namespace ctrl {

// Soft actor-critic with a tanh-squashed Gaussian policy, twin critics,
// polyak-averaged target critics, and an entropy temperature alpha tuned in
// log space toward a target entropy of -act_dim.
class SacAgent : public Agent {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;
  static constexpr double kSquashEps = 1e-6;

  SacAgent(AgentConfig cfg, RngStream& init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (std::isnan(cfg_.lr)) cfg_.lr = 3e-4;
    if (std::isnan(cfg_.target_entropy))
      cfg_.target_entropy = -static_cast<double>(cfg_.act_dim);
    center_ = cfg_.act_center();
    scale_ = cfg_.act_scale();

    std::vector<int> actor_dims{cfg_.obs_dim};
    for (int h : cfg_.hidden) actor_dims.push_back(h);
    actor_dims.push_back(2 * cfg_.act_dim);  // mean then log-std
    std::vector<int> critic_dims{cfg_.obs_dim + cfg_.act_dim};
    for (int h : cfg_.hidden) critic_dims.push_back(h);
    critic_dims.push_back(1);

    // draw order: actor, q1, q2; targets are copies
    actor_ = Mlp::make(actor_dims, init_rng);
    q1_ = Mlp::make(critic_dims, init_rng);
    q2_ = Mlp::make(critic_dims, init_rng);
    q1_target_ = q1_;
    q2_target_ = q2_;
    actor_adam_ = AdamState(actor_, cfg_.lr);
    q1_adam_ = AdamState(q1_, cfg_.lr);
    q2_adam_ = AdamState(q2_, cfg_.lr);
    log_alpha_ = std::log(cfg_.alpha_init);
    alpha_adam_ = ScalarAdam(cfg_.lr);
  }

  const AgentConfig& config() const override { return cfg_; }
  double alpha() const { return std::exp(log_alpha_); }

  Vec select_action(const Vec& s, ActionMode mode, RngStream& rng) override {
    require(s.size() == cfg_.obs_dim, "select_action: state dim mismatch");
    if (!s.allFinite()) throw InvalidInput("select_action: non-finite state");
    const Vec out = actor_.forward(s);
    const Vec mu = out.head(cfg_.act_dim);
    if (mode == ActionMode::eval)
      return center_.array() + scale_.array() * mu.array().tanh();
    const Vec log_std = out.tail(cfg_.act_dim)
                            .cwiseMax(kLogStdMin)
                            .cwiseMin(kLogStdMax);
    Vec u(cfg_.act_dim);
    for (int i = 0; i < cfg_.act_dim; ++i)
      u(i) = mu(i) + std::exp(log_std(i)) * rng.normal();
    return center_.array() + scale_.array() * u.array().tanh();
  }

  // Squashed-Gaussian sample and log density built on the tape, gradients
  // flowing to the actor through the reparameterization u = mu + std*xi.
  std::pair<Var, Var> policy_on_tape(Tape& tape, const MlpRef& actor_ref,
                                     Var s, const Mat& xi) const {
    const Var out = forward(tape, actor_ref, s);
    const Var mu = tape.slice_cols(out, 0, cfg_.act_dim);
    const Var log_std = tape.clamp(
        tape.slice_cols(out, cfg_.act_dim, cfg_.act_dim), kLogStdMin,
        kLogStdMax);
    const Var xi_leaf = tape.leaf(xi);
    const Var u = tape.add(mu, tape.mul(tape.exp(log_std), xi_leaf));
    const Var tanh_u = tape.tanh(u);
    const Var a =
        tape.shift_cols(tape.scale_cols(tanh_u, scale_), center_);
    // log prob: -xi^2/2 - log_std - log(2 pi)/2 - log(1 - tanh^2 + eps),
    // summed over action dims, minus the constant sum log scale.
    const Var xi_term =
        tape.leaf((-0.5 * xi.array().square()).matrix());
    const Var squash = tape.log(
        tape.affine(tape.square(tanh_u), -1.0, 1.0 + kSquashEps));
    Var elem = tape.sub(xi_term, tape.affine(log_std, 1.0,
                                             0.5 * std::log(2.0 * kPi())));
    elem = tape.sub(elem, squash);
    const Var logp = tape.affine(tape.rowsum(elem), 1.0,
                                 -scale_.array().log().sum());
    return {a, logp};
  }

  // Squashed policy evaluated without a tape: actions and per-row log
  // densities for given states and unit normals.
  std::pair<Mat, Vec> sample_policy(const Mat& s, const Mat& xi) const {
    require(s.cols() == cfg_.obs_dim && xi.rows() == s.rows() &&
                xi.cols() == cfg_.act_dim,
            "sample_policy: shape mismatch");
    const Mat out = actor_.forward(s);
    const Mat mu = out.leftCols(cfg_.act_dim);
    const Mat log_std = out.rightCols(cfg_.act_dim)
                            .array()
                            .max(kLogStdMin)
                            .min(kLogStdMax)
                            .matrix();
    const Mat u = mu.array() + log_std.array().exp() * xi.array();
    const Mat tanh_u = u.array().tanh().matrix();
    Mat a = tanh_u;
    a.array().rowwise() *= scale_.transpose().array();
    a.array().rowwise() += center_.transpose().array();
    const Mat elem = (-0.5 * xi.array().square() - log_std.array() -
                      0.5 * std::log(2.0 * kPi()) -
                      (1.0 + kSquashEps - tanh_u.array().square()).log())
                         .matrix();
    Vec logp = elem.rowwise().sum();
    logp.array() -= scale_.array().log().sum();
    return {std::move(a), std::move(logp)};
  }

  // Bellman targets for a batch, with the next-action noise supplied.
  Vec critic_target(const TrainingBatch& b, const Mat& xi_next) const {
    check_batch(b);
    auto [a_next, logp] = sample_policy(b.s_next, xi_next);
    Mat in(b.size(), cfg_.obs_dim + cfg_.act_dim);
    in << b.s_next, a_next;
    const Vec q = q1_target_.forward(in)
                      .col(0)
                      .cwiseMin(q2_target_.forward(in).col(0));
    const Vec boot = q - alpha() * logp;
    return b.r.array() +
           cfg_.gamma * (1.0 - b.done_eff.array()) * boot.array();
  }

  UpdateStats update(const TrainingBatch& batch, RngStream& rng) override {
    const Mat xi_next = draw_noise(batch.size(), rng);
    const Mat xi_actor = draw_noise(batch.size(), rng);
    return update_with_noise(batch, xi_next, xi_actor);
  }

  // Deterministic core of update(): one Adam step on each critic against
  // the Bellman target, one on the actor, one on log-alpha, then polyak.
  UpdateStats update_with_noise(const TrainingBatch& batch, const Mat& xi_next,
                                const Mat& xi_actor) {
    check_batch(batch);
    UpdateStats stats;
    const Vec y = critic_target(batch, xi_next);

    Mat critic_in(batch.size(), cfg_.obs_dim + cfg_.act_dim);
    critic_in << batch.s, batch.a;
    const double l1 = critic_step(q1_, q1_adam_, critic_in, y);
    const double l2 = critic_step(q2_, q2_adam_, critic_in, y);
    stats.critic_loss = 0.5 * (l1 + l2);

    const Mat& s_pi = batch.s_actor.has_value() ? *batch.s_actor : batch.s;
    double mean_logp = 0.0;
    stats.actor_loss = actor_step(s_pi, xi_actor, &mean_logp);
    stats.actor_stepped = true;

    // alpha follows -log_alpha * (mean logp + target entropy)
    alpha_adam_.step(log_alpha_, -(mean_logp + cfg_.target_entropy));
    stats.alpha = alpha();

    polyak_update(q1_target_, q1_, cfg_.tau);
    polyak_update(q2_target_, q2_, cfg_.tau);
    return stats;
  }

  Mlp& actor() { return actor_; }
  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& q1_target() { return q1_target_; }
  Mlp& q2_target() { return q2_target_; }
  AdamState& actor_adam() { return actor_adam_; }
  AdamState& q1_adam() { return q1_adam_; }
  AdamState& q2_adam() { return q2_adam_; }
  ScalarAdam& alpha_adam() { return alpha_adam_; }
  void set_alpha(double a) {
    require(a > 0.0, "alpha must be positive");
    log_alpha_ = std::log(a);
  }

  void serialize(std::ostream& out) override {
    for (Mlp* net : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_})
      bin::write_mlp(out, *net);
    for (AdamState* st : {&actor_adam_, &q1_adam_, &q2_adam_})
      bin::write_adam(out, *st);
    bin::write_f64(out, log_alpha_);
    bin::write_scalar_adam(out, alpha_adam_);
  }

  void deserialize(std::istream& in) override {
    for (Mlp* net : {&actor_, &q1_, &q2_, &q1_target_, &q2_target_})
      *net = bin::read_mlp(in);
    for (AdamState* st : {&actor_adam_, &q1_adam_, &q2_adam_})
      bin::read_adam(in, *st);
    log_alpha_ = bin::read_f64(in);
    bin::read_scalar_adam(in, alpha_adam_);
  }

 private:
  static double kPi() { return 3.14159265358979323846; }

  // row-major draw order, part of the determinism contract
  Mat draw_noise(long n, RngStream& rng) const {
    Mat xi(n, cfg_.act_dim);
    for (long i = 0; i < n; ++i)
      for (int j = 0; j < cfg_.act_dim; ++j) xi(i, j) = rng.normal();
    return xi;
  }

  void check_batch(const TrainingBatch& b) const {
    require(b.size() >= 1, "update: empty batch");
    require(b.s.cols() == cfg_.obs_dim && b.a.cols() == cfg_.act_dim &&
                b.s_next.cols() == cfg_.obs_dim &&
                b.r.size() == b.size() && b.done_eff.size() == b.size(),
            "update: batch shape mismatch");
    require(b.done_eff.minCoeff() >= 0.0 && b.done_eff.maxCoeff() <= 1.0,
            "update: done weights must lie in [0,1]");
  }

  double critic_step(Mlp& q, AdamState& adam, const Mat& in, const Vec& y) {
    Tape tape;
    const MlpRef ref = attach(tape, q, true);
    const Var pred = forward(tape, ref, tape.leaf(in));
    const Var target = tape.leaf(y);
    const Var loss = tape.mean(tape.square(tape.sub(pred, target)));
    const double out = tape.scalar(loss);
    tape.backward(loss);
    adam.step(q, read_grads(tape, ref));
    return out;
  }

  // One actor Adam step; returns the loss and fills the batch mean log
  // density (used by the alpha update).
  double actor_step(const Mat& s, const Mat& xi, double* mean_logp) {
    Tape tape;
    const MlpRef actor_ref = attach(tape, actor_, true);
    const MlpRef q1_ref = attach(tape, q1_, false);
    const MlpRef q2_ref = attach(tape, q2_, false);
    const Var s_leaf = tape.leaf(s);
    auto [a, logp] = policy_on_tape(tape, actor_ref, s_leaf, xi);
    const Var qin = tape.concat_cols(s_leaf, a);
    const Var qmin =
        tape.cwise_min(forward(tape, q1_ref, qin), forward(tape, q2_ref, qin));
    const Var loss =
        tape.mean(tape.sub(tape.affine(logp, alpha(), 0.0), qmin));
    const double out = tape.scalar(loss);
    *mean_logp = tape.value(logp).mean();
    tape.backward(loss);
    actor_adam_.step(actor_, read_grads(tape, actor_ref));
    return out;
  }

  AgentConfig cfg_;
  Vec center_, scale_;
  Mlp actor_, q1_, q2_, q1_target_, q2_target_;
  AdamState actor_adam_, q1_adam_, q2_adam_;
  double log_alpha_ = 0.0;
  ScalarAdam alpha_adam_;
};

}  // namespace ctrl
