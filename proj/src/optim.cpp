#include "priorlane/optim.hpp"

#include <cmath>

#include "priorlane/errors.hpp"

namespace priorlane {

Tensor init_xavier(Shape s, int fan_in, int fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / double(fan_in + fan_out));
  return init_normal(std::move(s), stddev, rng);
}

Tensor init_normal(Shape s, double stddev, Rng& rng) {
  std::vector<double> data(size_t(shape_numel(s)));
  for (double& v : data) v = rng.normal(0.0, stddev);
  return Tensor::from_data(std::move(s), std::move(data), /*requires_grad=*/true);
}

void Adam::step(ParamMap& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params.items[i].second.data().size(), 0.0);
      v_[i].assign(params.items[i].second.data().size(), 0.0);
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, double(step_));
  const double bc2 = 1.0 - std::pow(beta2_, double(step_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.items[i].second;
    if (!p.has_grad())
      throw UsageError("Adam: parameter '" + params.items[i].first +
                       "' has no gradient");
    auto& val = p.data();
    const auto& g = p.grad_ref();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < val.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Sgd::step(ParamMap& params) {
  ++step_;
  for (auto& [name, p] : params.items) {
    if (!p.has_grad())
      throw UsageError("SGD: parameter '" + name + "' has no gradient");
    auto& val = p.data();
    const auto& g = p.grad_ref();
    for (size_t j = 0; j < val.size(); ++j) val[j] -= lr_ * g[j];
  }
}

}  // namespace priorlane
