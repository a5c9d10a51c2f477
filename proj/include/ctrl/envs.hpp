#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "ctrl/common.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

struct EnvSpec {
  std::string name;
  int obs_dim = 0;
  int act_dim = 0;
  Vec action_low;
  Vec action_high;
  int max_episode_steps = 200;
};

struct EnvState {
  Vec q;  // physical coordinates, layout documented per environment
  int step_index = 0;
  bool done = false;
};

struct StepOut {
  EnvState state;
  Vec obs;
  double reward = 0.0;
  bool done = false;
  bool timeout = false;  // done came only from the step limit
  bool clipped = false;  // the action had to be clipped into bounds
};

// Three small control tasks with explicit difference equations
// (semi-implicit Euler where there is second-order dynamics). Step and
// reset are pure functions over EnvState; docs/environments.md lists the
// update rules and constants.
class Env {
  enum class Kind { pendulum, reacher, mcar };

 public:
  static Env make(std::string_view name) {
    Env e;
    if (name == "pendulum") {
      e.kind_ = Kind::pendulum;
      e.spec_ = {"pendulum", 3, 1, Vec::Constant(1, -2.0),
                 Vec::Constant(1, 2.0), 200};
    } else if (name == "reacher") {
      e.kind_ = Kind::reacher;
      e.spec_ = {"reacher", 4, 2, Vec::Constant(2, -1.0),
                 Vec::Constant(2, 1.0), 200};
    } else if (name == "mcar") {
      e.kind_ = Kind::mcar;
      e.spec_ = {"mcar", 2, 1, Vec::Constant(1, -1.0), Vec::Constant(1, 1.0),
                 200};
    } else {
      throw UsageError("unknown environment: " + std::string(name));
    }
    return e;
  }

  const EnvSpec& spec() const { return spec_; }

  std::pair<EnvState, Vec> reset(RngStream& rng) const {
    EnvState s;
    switch (kind_) {
      case Kind::pendulum: {
        s.q = Vec(2);
        s.q(0) = rng.uniform(-kPi, kPi);   // theta
        s.q(1) = rng.uniform(-1.0, 1.0);   // thetadot
        break;
      }
      case Kind::reacher: {
        s.q = Vec(4);
        s.q(0) = rng.uniform(-1.0, 1.0);   // px
        s.q(1) = rng.uniform(-1.0, 1.0);   // py
        s.q(2) = rng.uniform(-0.1, 0.1);   // vx
        s.q(3) = rng.uniform(-0.1, 0.1);   // vy
        break;
      }
      case Kind::mcar: {
        s.q = Vec(2);
        s.q(0) = rng.uniform(-0.6, -0.4);  // position
        s.q(1) = 0.0;                      // velocity
        break;
      }
    }
    return {s, observe(s)};
  }

  Vec observe(const EnvState& s) const {
    switch (kind_) {
      case Kind::pendulum: {
        Vec o(3);
        o << std::cos(s.q(0)), std::sin(s.q(0)), s.q(1);
        return o;
      }
      case Kind::reacher:
        return s.q;
      case Kind::mcar:
        return s.q;
    }
    throw InvalidInput("observe: bad kind");
  }

  StepOut step(const EnvState& s, const Vec& action) const {
    require(!s.done, "step: episode is already done");
    require(action.size() == spec_.act_dim, "step: action dim mismatch");
    if (!action.allFinite()) throw InvalidInput("step: non-finite action");

    StepOut out;
    Vec a = action;
    for (int i = 0; i < a.size(); ++i) {
      const double lo = spec_.action_low(i);
      const double hi = spec_.action_high(i);
      if (a(i) < lo || a(i) > hi) {
        a(i) = std::min(std::max(a(i), lo), hi);
        out.clipped = true;
      }
    }

    EnvState next = s;
    next.step_index = s.step_index + 1;
    bool terminal = false;  // true task termination, not the step limit

    switch (kind_) {
      case Kind::pendulum: {
        // th'' = 15 sin(th) + 3 u, dt = 0.05; cost uses the pre-step state.
        const double th = s.q(0), thdot = s.q(1), u = a(0);
        const double wrapped = wrap_angle(th);
        out.reward = -(wrapped * wrapped + 0.1 * thdot * thdot +
                       0.001 * u * u);
        double nd = thdot + (15.0 * std::sin(th) + 3.0 * u) * kDt;
        nd = std::min(std::max(nd, -8.0), 8.0);
        next.q(0) = th + nd * kDt;
        next.q(1) = nd;
        break;
      }
      case Kind::reacher: {
        // Double integrator toward a goal at the origin.
        const double ax = a(0), ay = a(1);
        double vx = s.q(2) + ax * kDt;
        double vy = s.q(3) + ay * kDt;
        vx = std::min(std::max(vx, -2.0), 2.0);
        vy = std::min(std::max(vy, -2.0), 2.0);
        double px = s.q(0) + vx * kDt;
        double py = s.q(1) + vy * kDt;
        px = std::min(std::max(px, -5.0), 5.0);
        py = std::min(std::max(py, -5.0), 5.0);
        const double dist = std::hypot(s.q(0), s.q(1));
        out.reward = -dist - 0.01 * (ax * ax + ay * ay);
        next.q << px, py, vx, vy;
        break;
      }
      case Kind::mcar: {
        // Power-scaled car on a cosine valley; reaching p >= 0.45 ends the
        // episode with a +100 bonus.
        const double p = s.q(0), v = s.q(1), u = a(0);
        double nv = v + 0.0015 * u - 0.0025 * std::cos(3.0 * p);
        nv = std::min(std::max(nv, -0.07), 0.07);
        double np = p + nv;
        if (np < -1.2) {
          np = -1.2;
          if (nv < 0.0) nv = 0.0;
        }
        if (np > 0.6) np = 0.6;
        out.reward = -0.1 * u * u;
        if (np >= 0.45 && nv >= 0.0) {
          out.reward += 100.0;
          terminal = true;
        }
        next.q << np, nv;
        break;
      }
    }

    const bool hit_limit = next.step_index >= spec_.max_episode_steps;
    out.done = terminal || hit_limit;
    out.timeout = hit_limit && !terminal;
    next.done = out.done;
    out.obs = observe(next);
    out.state = std::move(next);
    return out;
  }

  static double wrap_angle(double th) {
    const double two_pi = 2.0 * kPi;
    double w = std::fmod(th + kPi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - kPi;
  }

  static constexpr double kPi = 3.14159265358979323846;
  static constexpr double kDt = 0.05;

 private:
  Kind kind_ = Kind::pendulum;
  EnvSpec spec_;
};

}  // namespace ctrl
