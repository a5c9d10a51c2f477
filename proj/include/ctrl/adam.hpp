#pragma once

#include <cmath>
#include <vector>

#include "ctrl/common.hpp"
#include "ctrl/mlp.hpp"

namespace ctrl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

// Bias-corrected Adam over one Mlp's parameters. A zero gradient leaves the
// parameters and moments untouched apart from the step counter.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& shape, double lr) {
    cfg_.lr = lr;
    for (std::size_t l = 0; l < shape.w.size(); ++l) {
      mw_.push_back(Mat::Zero(shape.w[l].rows(), shape.w[l].cols()));
      vw_.push_back(Mat::Zero(shape.w[l].rows(), shape.w[l].cols()));
      mb_.push_back(Vec::Zero(shape.b[l].size()));
      vb_.push_back(Vec::Zero(shape.b[l].size()));
    }
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step(Mlp& params, const MlpGrads& g) {
    require(g.w.size() == mw_.size() && g.b.size() == mb_.size(),
            "adam: gradient/parameter layout mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < mw_.size(); ++l) {
      update(params.w[l], g.w[l], mw_[l], vw_[l], c1, c2);
      update(params.b[l], g.b[l], mb_[l], vb_[l], c1, c2);
    }
  }

  // Serialization hooks for checkpoints.
  long& raw_step() { return t_; }
  std::vector<Mat>& raw_mw() { return mw_; }
  std::vector<Mat>& raw_vw() { return vw_; }
  std::vector<Vec>& raw_mb() { return mb_; }
  std::vector<Vec>& raw_vb() { return vb_; }

 private:
  template <class T>
  void update(T& p, const T& g, T& m, T& v, double c1, double c2) {
    m.array() = cfg_.beta1 * m.array() + (1.0 - cfg_.beta1) * g.array();
    v.array() =
        cfg_.beta2 * v.array() + (1.0 - cfg_.beta2) * g.array().square();
    p.array() -= cfg_.lr * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + cfg_.eps_hat);
  }

  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Mat> mw_, vw_;
  std::vector<Vec> mb_, vb_;
};

// Adam for a single scalar (log-space temperature knobs and the like).
class ScalarAdam {
 public:
  ScalarAdam() = default;
  explicit ScalarAdam(double lr) { cfg_.lr = lr; }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step(double& p, double g) {
    require(std::isfinite(g), "adam: non-finite gradient");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_ / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const double vhat = v_ / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    p -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps_hat);
  }

  long& raw_step() { return t_; }
  double& raw_m() { return m_; }
  double& raw_v() { return v_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  double m_ = 0.0;
  double v_ = 0.0;
};

}  // namespace ctrl
