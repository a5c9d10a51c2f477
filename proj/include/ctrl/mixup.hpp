#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ctrl/common.hpp"
#include "ctrl/replay.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

enum class RatioKind { beta, uniform };

// A transition interpolated between two stored ones. eps weighs the first
// (earlier) member of the pair. Carries its sources so the corrected
// distance can be formed later.
struct ContinuousTransition {
  Vec s;
  Vec a;
  double r = 0.0;
  Vec s_next;
  double d = 0.0;  // may be fractional
  double eps = 1.0;
  bool self_pair = false;
  std::optional<std::pair<Transition, Transition>> source;
};

namespace detail {

// eps*a + (1-eps)*b, clamped into [min(a,b), max(a,b)] elementwise. The
// clamp keeps every mixed value inside the convex hull (plain rounding can
// escape it by an ulp) and reproduces either endpoint exactly at eps 0/1.
inline double lerp_clamped(double a, double b, double eps) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double v = eps * a + (1.0 - eps) * b;
  return std::min(std::max(v, lo), hi);
}

inline Vec lerp_clamped(const Vec& a, const Vec& b, double eps) {
  Vec out(a.size());
  for (long i = 0; i < a.size(); ++i) out(i) = lerp_clamped(a(i), b(i), eps);
  return out;
}

}  // namespace detail

inline ContinuousTransition mix(const Transition& t, const Transition& next,
                                double eps) {
  require(eps >= 0.0 && eps <= 1.0, "mix: eps must lie in [0,1]");
  require(t.s.size() == next.s.size() && t.a.size() == next.a.size(),
          "mix: source dim mismatch");
  ContinuousTransition out;
  out.s = detail::lerp_clamped(t.s, next.s, eps);
  out.a = detail::lerp_clamped(t.a, next.a, eps);
  out.r = detail::lerp_clamped(t.r, next.r, eps);
  out.s_next = detail::lerp_clamped(t.s_next, next.s_next, eps);
  out.d = detail::lerp_clamped(t.d, next.d, eps);
  out.eps = eps;
  out.self_pair = t.episode_id == next.episode_id &&
                  t.step_in_episode == next.step_in_episode;
  out.source = std::make_pair(t, next);
  return out;
}

// One interpolated batch: a fresh mixing ratio per pair, drawn Beta(beta,
// beta) (or uniform for the ablation) from the given stream. forced_eps is
// a test hook that pins every ratio and draws nothing.
inline std::vector<ContinuousTransition> make_batch(
    const std::vector<std::pair<Transition, Transition>>& pairs, double beta,
    RngStream& rng, RatioKind ratio = RatioKind::beta,
    std::optional<double> forced_eps = std::nullopt) {
  require(!pairs.empty(), "make_batch: empty pair list");
  require(beta > 0.0 && beta <= 1.0, "make_batch: beta must lie in (0,1]");
  std::vector<ContinuousTransition> out;
  out.reserve(pairs.size());
  for (const auto& [t, next] : pairs) {
    double eps;
    if (forced_eps.has_value()) {
      eps = *forced_eps;
    } else if (ratio == RatioKind::uniform) {
      eps = rng.uniform();
    } else {
      eps = rng.beta_symmetric(beta);
    }
    out.push_back(mix(t, next, eps));
  }
  return out;
}

}  // namespace ctrl
