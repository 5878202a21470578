#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace heatdisagg {

struct AdamParameters {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moments. `ascend` moves uphill (maximisation).
class Adam {
 public:
  Adam(std::size_t size, AdamParameters params) : params_(params), m_(size, 0.0), v_(size, 0.0) {}

  void ascend(std::span<double> x, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = params_.beta1 * m_[i] + (1.0 - params_.beta1) * grad[i];
      v_[i] = params_.beta2 * v_[i] + (1.0 - params_.beta2) * grad[i] * grad[i];
      x[i] += params_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + params_.epsilon);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamParameters params_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace heatdisagg
