#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "ctrl/common.hpp"
#include "ctrl/mixup.hpp"
#include "ctrl/mlp.hpp"
#include "ctrl/replay.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

enum class ActionMode { explore, eval };

struct AgentConfig {
  int obs_dim = 0;
  int act_dim = 0;
  Vec act_low;
  Vec act_high;
  std::vector<int> hidden = {256, 256};
  double lr = std::numeric_limits<double>::quiet_NaN();  // NaN: per-agent default
  double gamma = 0.99;
  double tau = 0.005;
  // terminals caused purely by the step limit bootstrap as if non-terminal
  bool bootstrap_timeouts = true;
  // train the actor on the authentic anchor states instead of mixed ones
  bool actor_raw = false;

  double alpha_init = 0.2;  // entropy temperature start
  double target_entropy = std::numeric_limits<double>::quiet_NaN();  // NaN: -act_dim

  int policy_delay = 2;             // critic steps per actor step
  double target_noise_std = 0.2;    // fraction of the action scale
  double target_noise_clip = 0.5;   // fraction of the action scale
  double explore_noise_std = 0.1;   // fraction of the action scale

  void validate() const {
    require(obs_dim >= 1 && act_dim >= 1, "agent: dims must be positive");
    require(act_low.size() == act_dim && act_high.size() == act_dim,
            "agent: action bound dims must match act_dim");
    require((act_high - act_low).minCoeff() > 0.0,
            "agent: action bounds must have positive extent");
    require(gamma >= 0.0 && gamma < 1.0, "agent: gamma must lie in [0,1)");
    require(tau > 0.0 && tau <= 1.0, "agent: tau must lie in (0,1]");
    require(alpha_init > 0.0, "agent: initial alpha must be positive");
    require(policy_delay >= 1, "agent: policy delay must be >= 1");
    for (int h : hidden) require(h >= 1, "agent: hidden widths must be >= 1");
  }

  Vec act_center() const { return 0.5 * (act_high + act_low); }
  Vec act_scale() const { return 0.5 * (act_high - act_low); }
};

// One update's worth of transitions in matrix form. done_eff carries the
// effective done weight in [0,1] after timeout masking; s_actor is set when
// the actor should see different (authentic) states than the critic.
struct TrainingBatch {
  Mat s;
  Mat a;
  Vec r;
  Mat s_next;
  Vec done_eff;
  std::optional<Mat> s_actor;

  long size() const { return s.rows(); }
};

namespace detail {

inline double effective_done(double d, bool timeout, bool bootstrap_timeouts) {
  return (timeout && bootstrap_timeouts) ? 0.0 : d;
}

}  // namespace detail

inline TrainingBatch to_batch(const std::vector<Transition>& ts,
                              bool bootstrap_timeouts) {
  require(!ts.empty(), "batch: empty");
  const long n = static_cast<long>(ts.size());
  const long obs = ts.front().s.size();
  const long act = ts.front().a.size();
  TrainingBatch b;
  b.s.resize(n, obs);
  b.a.resize(n, act);
  b.r.resize(n);
  b.s_next.resize(n, obs);
  b.done_eff.resize(n);
  for (long i = 0; i < n; ++i) {
    const Transition& t = ts[static_cast<std::size_t>(i)];
    require(t.s.size() == obs && t.a.size() == act &&
                t.s_next.size() == obs,
            "batch: transition dim mismatch");
    b.s.row(i) = t.s.transpose();
    b.a.row(i) = t.a.transpose();
    b.r(i) = t.r;
    b.s_next.row(i) = t.s_next.transpose();
    b.done_eff(i) = detail::effective_done(t.d, t.timeout, bootstrap_timeouts);
  }
  return b;
}

// Interpolated batch: timeout masking is applied per source, then mixed with
// the transition's own ratio, so a forced ratio of 1 reproduces the discrete
// batch bit for bit.
inline TrainingBatch to_batch(const std::vector<ContinuousTransition>& ts,
                              bool bootstrap_timeouts, bool actor_raw) {
  require(!ts.empty(), "batch: empty");
  const long n = static_cast<long>(ts.size());
  const long obs = ts.front().s.size();
  const long act = ts.front().a.size();
  TrainingBatch b;
  b.s.resize(n, obs);
  b.a.resize(n, act);
  b.r.resize(n);
  b.s_next.resize(n, obs);
  b.done_eff.resize(n);
  if (actor_raw) b.s_actor.emplace(n, obs);
  for (long i = 0; i < n; ++i) {
    const ContinuousTransition& t = ts[static_cast<std::size_t>(i)];
    require(t.s.size() == obs && t.a.size() == act &&
                t.s_next.size() == obs,
            "batch: transition dim mismatch");
    require(t.source.has_value(), "batch: transition carries no source pair");
    b.s.row(i) = t.s.transpose();
    b.a.row(i) = t.a.transpose();
    b.r(i) = t.r;
    b.s_next.row(i) = t.s_next.transpose();
    const Transition& first = t.source->first;
    const Transition& second = t.source->second;
    b.done_eff(i) = detail::lerp_clamped(
        detail::effective_done(first.d, first.timeout, bootstrap_timeouts),
        detail::effective_done(second.d, second.timeout, bootstrap_timeouts),
        t.eps);
    if (actor_raw) b.s_actor->row(i) = first.s.transpose();
  }
  return b;
}

// target' = (1-tau)*target + tau*online, elementwise over all parameters.
inline void polyak_update(Mlp& target, const Mlp& online, double tau) {
  require(tau >= 0.0 && tau <= 1.0, "polyak: tau must lie in [0,1]");
  require(target.dims == online.dims, "polyak: layout mismatch");
  for (std::size_t l = 0; l < target.w.size(); ++l) {
    target.w[l] = (1.0 - tau) * target.w[l] + tau * online.w[l];
    target.b[l] = (1.0 - tau) * target.b[l] + tau * online.b[l];
  }
}

// Per-update diagnostics. Fields are NaN when the update did not touch the
// corresponding piece (e.g. the delayed actor, or alpha for TD3).
struct UpdateStats {
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  bool actor_stepped = false;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual const AgentConfig& config() const = 0;
  virtual Vec select_action(const Vec& s, ActionMode mode, RngStream& rng) = 0;
  virtual UpdateStats update(const TrainingBatch& batch, RngStream& rng) = 0;
  virtual void serialize(std::ostream& out) = 0;
  virtual void deserialize(std::istream& in) = 0;
};

}  // namespace ctrl
