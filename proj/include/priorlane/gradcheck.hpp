#pragma once

// Central finite-difference audit. The checker never touches the reverse-mode
// path it verifies: it re-runs the forward closure with perturbed inputs.

#include <functional>
#include <string>
#include <vector>

#include "priorlane/tensor.hpp"

namespace priorlane {

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every element; otherwise per-input sample size (seeded).
  int max_elements_per_input = 0;
  uint64_t sample_seed = 1;
};

// f must rebuild its graph from `inputs` on every call and return a scalar.
// Returns the worst relative error over all checked elements, where
// rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-2).
double gradcheck_fn(const std::function<Tensor(std::vector<Tensor>&)>& f,
                    std::vector<Tensor>& inputs,
                    const GradCheckOptions& opts = {});

struct GradCase {
  std::string name;
  double tolerance;
  std::function<double()> run;  // worst relative error
};

// One case per differentiable op in ops.hpp.
std::vector<GradCase> op_gradcheck_cases();

}  // namespace priorlane
