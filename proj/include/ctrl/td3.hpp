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

// Twin delayed deterministic policy gradient: tanh-bounded deterministic
// actor, twin critics with clipped-noise target smoothing, and actor/target
// updates every policy_delay critic steps.
class Td3Agent : public Agent {
 public:
  Td3Agent(AgentConfig cfg, RngStream& init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (std::isnan(cfg_.lr)) cfg_.lr = 1e-3;
    center_ = cfg_.act_center();
    scale_ = cfg_.act_scale();

    std::vector<int> actor_dims{cfg_.obs_dim};
    for (int h : cfg_.hidden) actor_dims.push_back(h);
    actor_dims.push_back(cfg_.act_dim);
    std::vector<int> critic_dims{cfg_.obs_dim + cfg_.act_dim};
    for (int h : cfg_.hidden) critic_dims.push_back(h);
    critic_dims.push_back(1);

    // draw order: actor, q1, q2; targets are copies
    actor_ = Mlp::make(actor_dims, init_rng);
    q1_ = Mlp::make(critic_dims, init_rng);
    q2_ = Mlp::make(critic_dims, init_rng);
    actor_target_ = actor_;
    q1_target_ = q1_;
    q2_target_ = q2_;
    actor_adam_ = AdamState(actor_, cfg_.lr);
    q1_adam_ = AdamState(q1_, cfg_.lr);
    q2_adam_ = AdamState(q2_, cfg_.lr);
  }

  const AgentConfig& config() const override { return cfg_; }
  long update_count() const { return update_count_; }

  // Deterministic bounded action; explore adds clipped Gaussian noise and
  // re-clips to the bounds.
  Vec select_action(const Vec& s, ActionMode mode, RngStream& rng) override {
    require(s.size() == cfg_.obs_dim, "select_action: state dim mismatch");
    if (!s.allFinite()) throw InvalidInput("select_action: non-finite state");
    Vec a = policy(s);
    if (mode == ActionMode::eval) return a;
    for (int i = 0; i < cfg_.act_dim; ++i) {
      const double clip = cfg_.target_noise_clip * scale_(i);
      const double noise = std::clamp(
          rng.normal() * cfg_.explore_noise_std * scale_(i), -clip, clip);
      a(i) = std::clamp(a(i) + noise, cfg_.act_low(i), cfg_.act_high(i));
    }
    return a;
  }

  Vec policy(const Vec& s) const {
    const Vec out = actor_.forward(s);
    return center_.array() + scale_.array() * out.array().tanh();
  }

  // Bellman targets with supplied unit normals for the smoothing noise.
  Vec critic_target(const TrainingBatch& b, const Mat& xi) const {
    check_batch(b);
    require(xi.rows() == b.size() && xi.cols() == cfg_.act_dim,
            "critic_target: noise shape mismatch");
    const Mat raw = actor_target_.forward(b.s_next);
    Mat a_next(b.size(), cfg_.act_dim);
    for (long i = 0; i < b.size(); ++i)
      for (int j = 0; j < cfg_.act_dim; ++j) {
        const double base =
            center_(j) + scale_(j) * std::tanh(raw(i, j));
        const double clip = cfg_.target_noise_clip * scale_(j);
        const double noise = std::clamp(
            xi(i, j) * cfg_.target_noise_std * scale_(j), -clip, clip);
        a_next(i, j) =
            std::clamp(base + noise, cfg_.act_low(j), cfg_.act_high(j));
      }
    Mat in(b.size(), cfg_.obs_dim + cfg_.act_dim);
    in << b.s_next, a_next;
    const Vec q = q1_target_.forward(in)
                      .col(0)
                      .cwiseMin(q2_target_.forward(in).col(0));
    return b.r.array() +
           cfg_.gamma * (1.0 - b.done_eff.array()) * q.array();
  }

  UpdateStats update(const TrainingBatch& batch, RngStream& rng) override {
    check_batch(batch);
    Mat xi(batch.size(), cfg_.act_dim);
    for (long i = 0; i < batch.size(); ++i)
      for (int j = 0; j < cfg_.act_dim; ++j) xi(i, j) = rng.normal();
    return update_with_noise(batch, xi);
  }

  // Critics step every call; the actor and all targets step when the
  // running update count hits a multiple of policy_delay.
  UpdateStats update_with_noise(const TrainingBatch& batch, const Mat& xi) {
    check_batch(batch);
    UpdateStats stats;
    const Vec y = critic_target(batch, xi);

    Mat critic_in(batch.size(), cfg_.obs_dim + cfg_.act_dim);
    critic_in << batch.s, batch.a;
    const double l1 = critic_step(q1_, q1_adam_, critic_in, y);
    const double l2 = critic_step(q2_, q2_adam_, critic_in, y);
    stats.critic_loss = 0.5 * (l1 + l2);

    ++update_count_;
    if (update_count_ % cfg_.policy_delay == 0) {
      const Mat& s_pi =
          batch.s_actor.has_value() ? *batch.s_actor : batch.s;
      stats.actor_loss = actor_step(s_pi);
      stats.actor_stepped = true;
      polyak_update(actor_target_, actor_, cfg_.tau);
      polyak_update(q1_target_, q1_, cfg_.tau);
      polyak_update(q2_target_, q2_, cfg_.tau);
    }
    return stats;
  }

  Mlp& actor() { return actor_; }
  Mlp& actor_target() { return actor_target_; }
  Mlp& q1() { return q1_; }
  Mlp& q2() { return q2_; }
  Mlp& q1_target() { return q1_target_; }
  Mlp& q2_target() { return q2_target_; }
  AdamState& actor_adam() { return actor_adam_; }
  AdamState& q1_adam() { return q1_adam_; }
  AdamState& q2_adam() { return q2_adam_; }

  void serialize(std::ostream& out) override {
    for (Mlp* net :
         {&actor_, &q1_, &q2_, &actor_target_, &q1_target_, &q2_target_})
      bin::write_mlp(out, *net);
    for (AdamState* st : {&actor_adam_, &q1_adam_, &q2_adam_})
      bin::write_adam(out, *st);
    bin::write_i64(out, update_count_);
  }

  void deserialize(std::istream& in) override {
    for (Mlp* net :
         {&actor_, &q1_, &q2_, &actor_target_, &q1_target_, &q2_target_})
      *net = bin::read_mlp(in);
    for (AdamState* st : {&actor_adam_, &q1_adam_, &q2_adam_})
      bin::read_adam(in, *st);
    update_count_ = bin::read_i64(in);
  }

 private:
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
    const Var loss = tape.mean(tape.square(tape.sub(pred, tape.leaf(y))));
    const double out = tape.scalar(loss);
    tape.backward(loss);
    adam.step(q, read_grads(tape, ref));
    return out;
  }

  // Maximize q1 of the actor's own action: loss = -mean q1(s, pi(s)).
  double actor_step(const Mat& s) {
    Tape tape;
    const MlpRef actor_ref = attach(tape, actor_, true);
    const MlpRef q1_ref = attach(tape, q1_, false);
    const Var s_leaf = tape.leaf(s);
    const Var a = tape.shift_cols(
        tape.scale_cols(tape.tanh(forward(tape, actor_ref, s_leaf)), scale_),
        center_);
    const Var q = forward(tape, q1_ref, tape.concat_cols(s_leaf, a));
    const Var loss = tape.affine(tape.mean(q), -1.0, 0.0);
    const double out = tape.scalar(loss);
    tape.backward(loss);
    actor_adam_.step(actor_, read_grads(tape, actor_ref));
    return out;
  }

  AgentConfig cfg_;
  Vec center_, scale_;
  Mlp actor_, q1_, q2_, actor_target_, q1_target_, q2_target_;
  AdamState actor_adam_, q1_adam_, q2_adam_;
  long update_count_ = 0;
};

}  // namespace ctrl
