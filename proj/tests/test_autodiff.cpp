#include <doctest.h>

#include <cmath>

#include "priorlane/errors.hpp"
#include "priorlane/gradcheck.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/rng.hpp"

using namespace priorlane;

namespace {

Tensor rnd(Shape s, Rng& rng) {
  std::vector<double> d(size_t(shape_numel(s)));
  for (double& v : d) v = rng.uniform(-2.0, 2.0);
  return Tensor::from_data(std::move(s), std::move(d));
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("backward of sum gives all-ones") {
  Rng rng(20);
  Tensor x = rnd({3, 4}, rng);
  x.set_requires_grad(true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares gives 2x") {
  Rng rng(21);
  Tensor x = rnd({5}, rng);
  x.set_requires_grad(true);
  backward(sum(mul(x, x)));
  for (size_t i = 0; i < x.data().size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), UsageError);
}

TEST_CASE("repeated backward accumulates until grads are zeroed") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
  Tensor loss = sum(x);
  backward(loss);
  backward(loss);
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  backward(loss);
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("gradient flows through shared subexpressions") {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tensor y = mul(x, x);        // x^2
  Tensor z = add(y, y);        // 2 x^2 -> dz/dx = 4x = 12
  backward(sum(z));
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("composite linear-softmax-cross-entropy gradcheck") {
  Rng rng(22);
  std::vector<Tensor> in = {rnd({4, 3}, rng), rnd({3, 5}, rng), rnd({5}, rng)};
  auto f = [](std::vector<Tensor>& t) {
    Tensor logits = linear(t[0], t[1], t[2]);
    return cross_entropy(logits, {0, 4, 2, 1});
  };
  CHECK(gradcheck_fn(f, in) < 1e-5);
}

TEST_CASE("matmul analytic gradient matches finite differences") {
  Rng rng(23);
  std::vector<Tensor> in = {rnd({3, 4}, rng), rnd({4, 2}, rng)};
  auto f = [](std::vector<Tensor>& t) { return sum(matmul(t[0], t[1])); };
  CHECK(gradcheck_fn(f, in) < 1e-6);
}

TEST_CASE("conv2d gradcheck on the spec shapes") {
  Rng rng(24);
  std::vector<Tensor> in = {rnd({2, 5, 5}, rng), rnd({3, 2, 3, 3}, rng)};
  auto f = [](std::vector<Tensor>& t) {
    return mean(conv2d(t[0], t[1], 1, 1));
  };
  CHECK(gradcheck_fn(f, in) < 1e-6);
}

TEST_CASE("grid_sample gradient in the grid matches finite differences") {
  Rng rng(25);
  Tensor x = rnd({2, 4, 5}, rng);
  std::vector<double> g(size_t(3 * 3 * 2));
  for (double& v : g) v = rng.uniform(-0.9, 0.9);
  std::vector<Tensor> in = {x, Tensor::from_data({3, 3, 2}, std::move(g))};
  auto f = [](std::vector<Tensor>& t) {
    return sum(grid_sample(t[0], t[1]));
  };
  CHECK(gradcheck_fn(f, in) < 1e-5);
}

TEST_CASE("constant subgraphs are skipped") {
  Rng rng(26);
  Tensor x = rnd({2, 2}, rng);  // no grad
  Tensor w = rnd({2, 2}, rng);
  w.set_requires_grad(true);
  Tensor y = matmul(x, w);
  backward(sum(y));
  CHECK(w.has_grad());
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("every registered op case passes its tolerance") {
  for (GradCase& c : op_gradcheck_cases()) {
    INFO(c.name);
    CHECK(c.run() < c.tolerance);
  }
}

TEST_CASE("op gradcheck registry covers the public op set") {
  std::vector<std::string> expected = {
      "matmul",     "conv2d",     "overlap_patch_merge",
      "grid_sample", "softmax",   "gelu",
      "sigmoid",    "add",        "sub",
      "mul",        "scale",      "add_const",
      "broadcast_mul", "broadcast_add", "reshape",
      "transpose2d", "permute",   "concat",
      "slice",      "layer_norm", "add_rowwise",
      "add_channel_bias", "linear", "sum",
      "mean",       "reduce_max0", "spatial_mean",
      "avg_pool2d", "upsample_bilinear", "cross_entropy",
      "cross_entropy_weighted", "bce_with_logits"};
  auto cases = op_gradcheck_cases();
  for (const std::string& name : expected) {
    bool found = false;
    for (const GradCase& c : cases) found |= c.name == name;
    INFO(name);
    CHECK(found);
  }
}

}  // TEST_SUITE
