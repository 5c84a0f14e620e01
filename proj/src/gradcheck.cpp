#include "priorlane/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/rng.hpp"

namespace priorlane {

double gradcheck_fn(const std::function<Tensor(std::vector<Tensor>&)>& f,
                    std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
  for (Tensor& t : inputs) t.set_requires_grad(true);
  Tensor loss = f(inputs);
  if (loss.numel() != 1) throw UsageError("gradcheck: loss must be scalar");
  for (Tensor& t : inputs) t.zero_grad();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) analytic.push_back(t.grad());

  Rng rng(opts.sample_seed);
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    const int64_t n = t.numel();
    std::vector<int64_t> picks;
    if (opts.max_elements_per_input <= 0 ||
        n <= opts.max_elements_per_input) {
      picks.resize(size_t(n));
      for (int64_t j = 0; j < n; ++j) picks[size_t(j)] = j;
    } else {
      std::set<int64_t> chosen;
      while (int(chosen.size()) < opts.max_elements_per_input)
        chosen.insert(rng.uniform_int(0, n - 1));
      picks.assign(chosen.begin(), chosen.end());
    }
    for (int64_t j : picks) {
      const double saved = t.data()[size_t(j)];
      t.data()[size_t(j)] = saved + opts.eps;
      const double lp = f(inputs).item();
      t.data()[size_t(j)] = saved - opts.eps;
      const double lm = f(inputs).item();
      t.data()[size_t(j)] = saved;
      const double numeric = (lp - lm) / (2.0 * opts.eps);
      const double a = analytic[i][size_t(j)];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-2});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> data(size_t(shape_numel(s)));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(s), std::move(data));
}

// Reduce an op's output to a scalar through fixed random coefficients so
// every output element carries gradient.
Tensor weighted_sum(const Tensor& y, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(size_t(y.numel()));
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor::from_data(y.shape(), std::move(w))));
}

GradCase unary_case(const std::string& name, double tol, Shape shape,
                    std::function<Tensor(const Tensor&)> op, uint64_t seed) {
  return {name, tol, [shape, op, seed]() {
            Rng rng(seed);
            std::vector<Tensor> inputs = {random_tensor(shape, rng)};
            auto f = [&](std::vector<Tensor>& in) {
              return weighted_sum(op(in[0]), seed ^ 0xabcdef);
            };
            return gradcheck_fn(f, inputs);
          }};
}

}  // namespace

std::vector<GradCase> op_gradcheck_cases() {
  std::vector<GradCase> cases;

  cases.push_back({"matmul", 1e-6, [] {
                     Rng rng(11);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({4, 2}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(matmul(t[0], t[1]), 101);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back({"conv2d", 1e-6, [] {
                     Rng rng(12);
                     std::vector<Tensor> in = {random_tensor({2, 5, 5}, rng),
                                               random_tensor({3, 2, 3, 3}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(conv2d(t[0], t[1], 1, 1), 102);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(
      {"overlap_patch_merge", 1e-6, [] {
         Rng rng(13);
         std::vector<Tensor> in = {random_tensor({2, 8, 8}, rng),
                                   random_tensor({3, 2, 3, 3}, rng)};
         auto f = [](std::vector<Tensor>& t) {
           return weighted_sum(overlap_patch_merge(t[0], t[1], 2), 103);
         };
         return gradcheck_fn(f, in);
       }});

  cases.push_back({"grid_sample", 1e-5, [] {
                     Rng rng(14);
                     std::vector<Tensor> in = {
                         random_tensor({2, 4, 5}, rng),
                         // keep sample points off the pixel lattice
                         random_tensor({3, 3, 2}, rng, -0.93, 0.91)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(grid_sample(t[0], t[1]), 104);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(unary_case(
      "softmax", 1e-6, {3, 5},
      [](const Tensor& x) { return softmax(x, 1); }, 15));
  cases.push_back(unary_case(
      "gelu", 1e-6, {4, 4}, [](const Tensor& x) { return gelu(x); }, 16));
  cases.push_back(unary_case(
      "sigmoid", 1e-6, {4, 4}, [](const Tensor& x) { return sigmoid(x); }, 17));

  cases.push_back({"add", 1e-6, [] {
                     Rng rng(18);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({3, 4}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(add(t[0], t[1]), 108);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"sub", 1e-6, [] {
                     Rng rng(19);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({3, 4}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(sub(t[0], t[1]), 109);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"mul", 1e-6, [] {
                     Rng rng(20);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({3, 4}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(mul(t[0], t[1]), 110);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back(unary_case(
      "scale", 1e-6, {3, 4}, [](const Tensor& x) { return scale(x, -1.7); },
      21));
  cases.push_back(unary_case(
      "add_const", 1e-6, {3, 4},
      [](const Tensor& x) { return add_const(x, 0.4); }, 22));

  cases.push_back({"broadcast_mul", 1e-6, [] {
                     Rng rng(23);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({1}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(broadcast_mul(t[0], t[1]), 111);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"broadcast_add", 1e-6, [] {
                     Rng rng(24);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({1}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(broadcast_add(t[0], t[1]), 112);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(unary_case(
      "reshape", 1e-6, {3, 4},
      [](const Tensor& x) { return reshape(x, {2, 6}); }, 25));
  cases.push_back(unary_case(
      "transpose2d", 1e-6, {3, 4},
      [](const Tensor& x) { return transpose2d(x); }, 26));
  cases.push_back(unary_case(
      "permute", 1e-6, {2, 3, 4},
      [](const Tensor& x) { return permute(x, {2, 0, 1}); }, 27));
  cases.push_back({"concat", 1e-6, [] {
                     Rng rng(28);
                     std::vector<Tensor> in = {random_tensor({2, 3}, rng),
                                               random_tensor({4, 3}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(concat({t[0], t[1]}, 0), 113);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back(unary_case(
      "slice", 1e-6, {5, 4},
      [](const Tensor& x) { return slice(x, 0, 1, 3); }, 29));

  cases.push_back({"layer_norm", 1e-5, [] {
                     Rng rng(30);
                     std::vector<Tensor> in = {random_tensor({4, 6}, rng),
                                               random_tensor({6}, rng),
                                               random_tensor({6}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(layer_norm(t[0], t[1], t[2]), 114);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"add_rowwise", 1e-6, [] {
                     Rng rng(31);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({4}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(add_rowwise(t[0], t[1]), 115);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"add_channel_bias", 1e-6, [] {
                     Rng rng(32);
                     std::vector<Tensor> in = {random_tensor({3, 4, 5}, rng),
                                               random_tensor({3}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(add_channel_bias(t[0], t[1]), 116);
                     };
                     return gradcheck_fn(f, in);
                   }});
  cases.push_back({"linear", 1e-6, [] {
                     Rng rng(33);
                     std::vector<Tensor> in = {random_tensor({3, 4}, rng),
                                               random_tensor({4, 5}, rng),
                                               random_tensor({5}, rng)};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(linear(t[0], t[1], t[2]), 117);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(unary_case(
      "sum", 1e-6, {3, 4}, [](const Tensor& x) { return sum(x); }, 34));
  cases.push_back(unary_case(
      "mean", 1e-6, {3, 4}, [](const Tensor& x) { return mean(x); }, 35));
  cases.push_back(unary_case(
      "reduce_max0", 1e-5, {4, 5, 3},
      [](const Tensor& x) { return reduce_max0(x); }, 36));
  cases.push_back(unary_case(
      "spatial_mean", 1e-6, {3, 4, 5},
      [](const Tensor& x) { return spatial_mean(x); }, 37));
  cases.push_back(unary_case(
      "avg_pool2d", 1e-6, {2, 6, 6},
      [](const Tensor& x) { return avg_pool2d(x, 2, 2); }, 38));
  cases.push_back(unary_case(
      "upsample_bilinear", 1e-5, {2, 3, 4},
      [](const Tensor& x) { return upsample_bilinear(x, 5, 7); }, 39));

  cases.push_back(unary_case(
      "cross_entropy", 1e-6, {4, 3},
      [](const Tensor& x) {
        return cross_entropy(x, {0, 2, 1, 2});
      },
      40));
  cases.push_back(unary_case(
      "cross_entropy_weighted", 1e-6, {4, 3},
      [](const Tensor& x) {
        return cross_entropy_weighted(x, {0, 2, 1, 2}, {1.0, 2.5, 4.0});
      },
      42));
  cases.push_back(unary_case(
      "bce_with_logits", 1e-6, {6},
      [](const Tensor& x) {
        return bce_with_logits(x, {1.0, 0.0, 1.0, 1.0, 0.0, 0.0});
      },
      41));

  return cases;
}

}  // namespace priorlane
