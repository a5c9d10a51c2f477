#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ctrl/common.hpp"

namespace ctrl {

// Deterministic 64-bit random stream (splitmix64). A module derives its own
// stream from the run seed and a label, so streams never share state: how
// often one module draws cannot perturb another module's sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream derive(std::uint64_t seed, std::string_view label) {
    return RngStream(mix64(seed ^ fnv1a(label)));
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform on [0,1), on the 2^-53 grid.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    require(lo <= hi && std::isfinite(lo) && std::isfinite(hi),
            "uniform: bad interval");
    return lo + (hi - lo) * uniform();
  }

  // Unbiased-enough index in [0,n).
  std::uint64_t index(std::uint64_t n) {
    require(n > 0, "index: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one value per call (two uniforms drawn).
  double normal() {
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang squeeze; valid for shape >= 1.
  double gamma_mt(double shape) {
    require(shape >= 1.0, "gamma_mt: shape must be >= 1");
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // log of a Gamma(shape, 1) variate; boosts through shape+1 when shape < 1
  // so tiny shapes stay representable.
  double log_gamma_variate(double shape) {
    require(shape > 0.0, "log_gamma_variate: shape must be positive");
    if (shape >= 1.0) return std::log(gamma_mt(shape));
    const double g = gamma_mt(shape + 1.0);
    const double u = 1.0 - uniform();  // (0,1]
    return std::log(g) + std::log(u) / shape;
  }

  // Beta(b, b) as g1/(g1+g2) with g ~ Gamma(b,1); combined through the log
  // ratio so b near the 1e-4 floor cannot underflow to an exact endpoint.
  double beta_symmetric(double b) {
    require(b > 0.0 && b <= 1.0, "beta_symmetric: b must lie in (0,1]");
    const double lg1 = log_gamma_variate(b);
    const double lg2 = log_gamma_variate(b);
    const double t = lg2 - lg1;  // eps = 1/(1+e^t)
    double eps;
    if (t >= 0.0) {
      eps = 1.0 / (1.0 + std::exp(t));
    } else {
      const double e = std::exp(t);  // underflow-safe branch: t < 0
      eps = 1.0 - e / (1.0 + e);
    }
    const double hi = 1.0 - 0x1.0p-53;
    if (eps < 1e-300) eps = 1e-300;
    if (eps > hi) eps = hi;
    return eps;
  }

  std::vector<double> sample_uniform(long n) {
    require(n >= 1, "sample_uniform: n must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = uniform();
    return out;
  }

  std::vector<double> sample_normal(long n) {
    require(n >= 1, "sample_normal: n must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = normal();
    return out;
  }

  std::vector<double> sample_beta(double b, long n) {
    require(b > 0.0 && b <= 1.0, "sample_beta: b must lie in (0,1]");
    require(n >= 1, "sample_beta: n must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = beta_symmetric(b);
    return out;
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ull;
    }
    return h;
  }

  std::uint64_t state_;
};

}  // namespace ctrl
