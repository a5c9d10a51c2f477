#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ctrl/envs.hpp"
#include "ctrl/rng.hpp"

using ctrl::Env;
using ctrl::EnvState;
using ctrl::RngStream;
using ctrl::Vec;

namespace {

double pendulum_energy(const EnvState& s) {
  // Rod pendulum: E = thdot^2/6 + 5 cos(theta), conserved when u = 0.
  return s.q(1) * s.q(1) / 6.0 + 5.0 * std::cos(s.q(0));
}

}  // namespace

TEST_CASE("spec dims and bounds", "[envs]") {
  Env p = Env::make("pendulum");
  REQUIRE(p.spec().obs_dim == 3);
  REQUIRE(p.spec().act_dim == 1);
  REQUIRE(p.spec().action_high(0) == 2.0);

  Env r = Env::make("reacher");
  REQUIRE(r.spec().obs_dim == 4);
  REQUIRE(r.spec().act_dim == 2);

  Env m = Env::make("mcar");
  REQUIRE(m.spec().obs_dim == 2);
  REQUIRE(m.spec().act_dim == 1);

  REQUIRE_THROWS_AS(Env::make("cartpole"), ctrl::UsageError);
}

TEST_CASE("reset is deterministic and in the documented ranges", "[envs]") {
  for (const char* name : {"pendulum", "reacher", "mcar"}) {
    Env env = Env::make(name);
    RngStream a(123), b(123);
    auto [s1, o1] = env.reset(a);
    auto [s2, o2] = env.reset(b);
    REQUIRE((s1.q - s2.q).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((o1 - o2).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(s1.step_index == 0);
    REQUIRE_FALSE(s1.done);
  }

  Env p = Env::make("pendulum");
  RngStream r(7);
  for (int i = 0; i < 200; ++i) {
    auto [s, o] = p.reset(r);
    REQUIRE(s.q(0) >= -Env::kPi);
    REQUIRE(s.q(0) < Env::kPi);
    REQUIRE(std::abs(s.q(1)) <= 1.0);
  }
}

TEST_CASE("pendulum hanging balance point", "[envs]") {
  Env env = Env::make("pendulum");
  EnvState s;
  s.q = Vec(2);
  s.q << Env::kPi, 0.0;
  auto out = env.step(s, Vec::Zero(1));
  REQUIRE(out.reward == -(Env::kPi * Env::kPi));
  REQUIRE(std::abs(out.state.q(0) - Env::kPi) < 1e-12);
  REQUIRE(std::abs(out.state.q(1)) < 1e-12);
}

TEST_CASE("pendulum rewards are bounded and observations consistent",
          "[envs]") {
  Env env = Env::make("pendulum");
  RngStream r(11);
  auto [s, o] = env.reset(r);
  const double worst = -(Env::kPi * Env::kPi + 0.1 * 64.0 + 0.001 * 4.0);
  for (int i = 0; i < 199; ++i) {
    Vec a(1);
    a << r.uniform(-2, 2);
    auto out = env.step(s, a);
    REQUIRE(out.reward <= 0.0);
    REQUIRE(out.reward >= worst);
    REQUIRE(out.obs(0) == Catch::Approx(std::cos(out.state.q(0))));
    REQUIRE(out.obs(1) == Catch::Approx(std::sin(out.state.q(0))));
    REQUIRE(std::abs(out.state.q(1)) <= 8.0);
    s = out.state;
  }
}

TEST_CASE("pendulum energy drift per step stays small with no torque",
          "[envs]") {
  Env env = Env::make("pendulum");
  RngStream r(13);
  for (int trial = 0; trial < 10; ++trial) {
    auto [s, o] = env.reset(r);
    const double e0 = pendulum_energy(s);
    int steps = 0;
    while (!s.done) {
      auto out = env.step(s, Vec::Zero(1));
      s = out.state;
      ++steps;
    }
    REQUIRE(steps == 200);
    const double drift_per_step =
        std::abs(pendulum_energy(s) - e0) / static_cast<double>(steps);
    REQUIRE(drift_per_step < 1e-2);
  }
}

TEST_CASE("reacher at the goal with zero action stays put with zero reward",
          "[envs]") {
  Env env = Env::make("reacher");
  EnvState s;
  s.q = Vec::Zero(4);
  auto out = env.step(s, Vec::Zero(2));
  REQUIRE(out.reward == 0.0);
  REQUIRE(out.state.q.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reacher rewards are never positive", "[envs]") {
  Env env = Env::make("reacher");
  RngStream r(17);
  auto [s, o] = env.reset(r);
  while (!s.done) {
    Vec a(2);
    a << r.uniform(-1, 1), r.uniform(-1, 1);
    auto out = env.step(s, a);
    REQUIRE(out.reward <= 0.0);
    s = out.state;
  }
}

TEST_CASE("mountain car trajectory matches a hand integration", "[envs]") {
  // Independent re-integration of the documented difference equation.
  Env env = Env::make("mcar");
  EnvState s;
  s.q = Vec(2);
  s.q << -0.5, 0.0;

  double p = -0.5, v = 0.0;
  const double u = 1.0;
  for (int i = 0; i < 150; ++i) {
    auto out = env.step(s, Vec::Constant(1, u));
    s = out.state;

    v = v + 0.0015 * u - 0.0025 * std::cos(3.0 * p);
    if (v > 0.07) v = 0.07;
    if (v < -0.07) v = -0.07;
    p = p + v;
    if (p < -1.2) {
      p = -1.2;
      if (v < 0.0) v = 0.0;
    }
    if (p > 0.6) p = 0.6;

    REQUIRE(s.q(0) == Catch::Approx(p).margin(1e-12));
    REQUIRE(s.q(1) == Catch::Approx(v).margin(1e-12));
    if (s.done) break;
  }
}

TEST_CASE("mountain car pays a control cost and a goal bonus", "[envs]") {
  Env env = Env::make("mcar");
  EnvState s;
  s.q = Vec(2);
  s.q << 0.44, 0.05;
  auto out = env.step(s, Vec::Constant(1, 1.0));
  REQUIRE(out.done);
  REQUIRE_FALSE(out.timeout);
  REQUIRE(out.reward == Catch::Approx(99.9));
}

TEST_CASE("step limit sets done with the timeout flag", "[envs]") {
  Env env = Env::make("pendulum");
  RngStream r(19);
  auto [s, o] = env.reset(r);
  for (int i = 0; i < 199; ++i) {
    auto out = env.step(s, Vec::Zero(1));
    REQUIRE_FALSE(out.done);
    s = out.state;
  }
  auto out = env.step(s, Vec::Zero(1));
  REQUIRE(out.done);
  REQUIRE(out.timeout);
  REQUIRE_THROWS_AS(env.step(out.state, Vec::Zero(1)), ctrl::InvalidInput);
}

TEST_CASE("out-of-bounds actions are clipped and flagged", "[envs]") {
  Env env = Env::make("pendulum");
  EnvState s;
  s.q = Vec(2);
  s.q << 0.3, 0.0;
  auto hard = env.step(s, Vec::Constant(1, 50.0));
  auto capped = env.step(s, Vec::Constant(1, 2.0));
  REQUIRE(hard.clipped);
  REQUIRE_FALSE(capped.clipped);
  REQUIRE(hard.state.q(1) == capped.state.q(1));

  Vec bad(1);
  bad << std::nan("");
  REQUIRE_THROWS_AS(env.step(s, bad), ctrl::InvalidInput);
  const Vec wrong_dim = Vec::Zero(2);
  REQUIRE_THROWS_AS(env.step(s, wrong_dim), ctrl::InvalidInput);
}
