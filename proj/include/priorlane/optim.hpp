#pragma once

#include <vector>

#include "priorlane/params.hpp"

namespace priorlane {

// Per-parameter Adam moment buffers plus the shared step counter. Buffers
// mirror parameter shapes; the counter strictly increases per update.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamMap& params);
  int64_t step_count() const { return step_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParamMap& params);
  int64_t step_count() const { return step_; }

 private:
  double lr_;
  int64_t step_ = 0;
};

}  // namespace priorlane
