#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "lss/model/layers.hpp"

namespace lss {

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(nn::ParamSet<T>& params, AdamParams hp) : params_(params), hp_(hp) {
    for (const auto& p : params.items()) {
      m_.emplace_back(p.grad.size(), 0.0);
      v_.emplace_back(p.grad.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(hp_.beta1, t_), c2 = 1.0 - std::pow(hp_.beta2, t_);
    std::size_t k = 0;
    for (auto& p : params_.items()) {
      auto& m = m_[k];
      auto& v = v_[k++];
      for (std::size_t i = 0; i < p.grad.size(); ++i) {
        const double g = p.grad[i];
        m[i] = hp_.beta1 * m[i] + (1 - hp_.beta1) * g;
        v[i] = hp_.beta2 * v[i] + (1 - hp_.beta2) * g * g;
        p.value[i] -= T(hp_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp_.eps));
      }
    }
  }

  long steps() const { return t_; }

 private:
  nn::ParamSet<T>& params_;
  AdamParams hp_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

/// Tracks the best epoch of a validation series and, with a positive
/// patience, signals a stop after that many epochs without improvement.
class ModelSelector {
 public:
  enum class Goal { minimize, maximize };

  ModelSelector(Goal goal, int patience) : goal_(goal), patience_(patience) {}

  /// Records the next epoch; true when it is the new best.
  bool update(double value) {
    ++epoch_;
    const bool better = best_epoch_ == 0 || (goal_ == Goal::minimize ? value < best_ : value > best_);
    if (better) {
      best_ = value;
      best_epoch_ = epoch_;
    }
    return better;
  }

  bool should_stop() const { return patience_ > 0 && best_epoch_ > 0 && epoch_ - best_epoch_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_value() const { return best_; }
  int epochs_seen() const { return epoch_; }

 private:
  Goal goal_;
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace lss
