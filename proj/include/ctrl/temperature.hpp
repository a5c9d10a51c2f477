#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctrl/adam.hpp"
#include "ctrl/common.hpp"

namespace ctrl {

// Sharpness controller for the Beta(beta,beta) mixing ratios. The optimized
// quantity is rho = log(beta); each update takes one Adam step on
// log(beta) * (mean_dtilde - m), with the batch mean treated as a constant,
// then clips beta back into [1e-4, 1]. Mean corrected distance above the
// tolerance m pushes beta down (sharper ratios, interpolants closer to the
// endpoints); below m pushes it up toward uniform mixing.
class Temperature {
 public:
  static constexpr double kFloor = 1e-4;
  static constexpr double kCeil = 1.0;

  explicit Temperature(double m = 0.1, double lr = 3e-4, double init = 1.0)
      : m_(m), beta_(init), rho_(std::log(init)), adam_(lr) {
    require(m > 0.0, "temperature: tolerance must be positive");
    require(init >= kFloor && init <= kCeil,
            "temperature: initial beta must lie in [1e-4, 1]");
  }

  // log(beta) * (mean_dtilde - m); the scalar objective whose rho-gradient
  // is (mean_dtilde - m).
  static double loss(double beta, double mean_dtilde, double m) {
    require(beta > 0.0 && beta <= 1.0, "beta loss: beta must lie in (0,1]");
    require(std::isfinite(mean_dtilde) && mean_dtilde >= 0.0,
            "beta loss: mean corrected distance must be >= 0");
    return std::log(beta) * (mean_dtilde - m);
  }

  double beta() const { return beta_; }
  double rho() const { return rho_; }
  double tolerance() const { return m_; }
  ScalarAdam& adam() { return adam_; }

  void update(const std::vector<double>& dtilde) {
    require(!dtilde.empty(), "temperature update: empty batch");
    double sum = 0.0;
    for (double v : dtilde) sum += v;
    update_mean(sum / static_cast<double>(dtilde.size()));
  }

  void update(const Vec& dtilde) {
    require(dtilde.size() > 0, "temperature update: empty batch");
    update_mean(dtilde.mean());
  }

  // One Adam step from an already-computed batch mean.
  void update_mean(double mean_dtilde) {
    require(std::isfinite(mean_dtilde) && mean_dtilde >= 0.0,
            "temperature update: mean corrected distance must be >= 0");
    adam_.step(rho_, mean_dtilde - m_);
    beta_ = std::clamp(std::exp(rho_), kFloor, kCeil);
    rho_ = std::log(beta_);
  }

  // Checkpoint hook; resets rho to match.
  void set_beta(double beta) {
    require(beta >= kFloor && beta <= kCeil,
            "temperature: beta must lie in [1e-4, 1]");
    beta_ = beta;
    rho_ = std::log(beta);
  }

 private:
  double m_;
  double beta_;
  double rho_;
  ScalarAdam adam_;
};

}  // namespace ctrl
