#pragma once

// Named trainable parameters. Modules register their leaves here so the
// optimizer and the checkpoint writer see one flat, stably-ordered list.

#include <string>
#include <utility>
#include <vector>

#include "priorlane/rng.hpp"
#include "priorlane/tensor.hpp"

namespace priorlane {

struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, const Tensor& t) {
    items.emplace_back(name, t);
  }
  size_t size() const { return items.size(); }
  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [_, t] : items) n += t.numel();
    return n;
  }
  void zero_grad() {
    for (auto& [_, t] : items) t.zero_grad();
  }
  const Tensor* find(const std::string& name) const {
    for (const auto& [k, t] : items)
      if (k == name) return &t;
    return nullptr;
  }
};

// Xavier-normal weight, std = sqrt(2 / (fan_in + fan_out)).
Tensor init_xavier(Shape s, int fan_in, int fan_out, Rng& rng);
// Plain normal init.
Tensor init_normal(Shape s, double stddev, Rng& rng);

}  // namespace priorlane
