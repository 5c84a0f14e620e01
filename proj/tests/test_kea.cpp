#include <doctest.h>

#include <cmath>

#include "priorlane/errors.hpp"
#include "priorlane/gradcheck.hpp"
#include "priorlane/kea.hpp"
#include "priorlane/ops.hpp"

using namespace priorlane;

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor rnd(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(size_t(shape_numel(s)));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(s), std::move(d));
}

// quarter-turn of an [N,G,G] stack: out[r][c] = in[c][G-1-r] per slice
std::vector<double> rot90_stack(const std::vector<double>& v, int n, int g) {
  std::vector<double> out(v.size());
  for (int ch = 0; ch < n; ++ch)
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c)
        out[(size_t(ch) * g + r) * g + c] =
            v[(size_t(ch) * g + c) * g + (g - 1 - r)];
  return out;
}

// cyclic shift by one: output channel n holds input channel (n-1) mod N
std::vector<double> shift_channels(const std::vector<double>& v, int n, int g) {
  std::vector<double> out(v.size());
  const size_t plane = size_t(g) * g;
  for (int ch = 0; ch < n; ++ch) {
    const int src = ((ch - 1) % n + n) % n;
    std::copy(v.begin() + src * plane, v.begin() + (src + 1) * plane,
              out.begin() + ch * plane);
  }
  return out;
}

}  // namespace

TEST_SUITE("kea") {

TEST_CASE("rotation matrix is exact for quarter turns") {
  Tensor m = rotation_matrix(3, kPi / 2);
  // each row must be a one-hot selecting in[c][K-1-r]
  Tensor kernel = Tensor::from_data({1, 9}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor rotated = matmul(kernel, transpose2d(m));
  // CCW quarter turn of [[1,2,3],[4,5,6],[7,8,9]] -> [[3,6,9],[2,5,8],[1,4,7]]
  CHECK(rotated.data() == std::vector<double>{3, 6, 9, 2, 5, 8, 1, 4, 7});

  Tensor full = rotation_matrix(3, 2 * kPi);
  Tensor same = matmul(kernel, transpose2d(full));
  CHECK(same.data() == kernel.data());
}

TEST_CASE("bilinear rotation preserves the kernel center") {
  for (double theta : {kPi / 4, 1.1, -0.7}) {
    Tensor m = rotation_matrix(5, theta);
    std::vector<double> delta(25, 0.0);
    delta[12] = 1.0;  // center
    Tensor rotated = matmul(Tensor::from_data({1, 25}, std::move(delta)),
                            transpose2d(m));
    CHECK(rotated.data()[12] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("1x1 two-orientation bank reproduces the hand-computed response") {
  // canonical channels (2, 3); input orientation channels (1, 5)
  Rng rng(1);
  ArfLayer layer(2, 1, rng);
  Tensor canonical = layer.canonical();  // shared handle
  canonical.data() = {2.0, 3.0};
  Tensor x = Tensor::from_data({2, 1, 1}, {1.0, 5.0});
  Tensor f = layer.forward(x);
  REQUIRE(f.shape() == Shape{2, 1, 1});
  CHECK(f.data()[0] == doctest::Approx(17.0));  // 2*1 + 3*5
  CHECK(f.data()[1] == doctest::Approx(13.0));  // 3*1 + 2*5
}

TEST_CASE("single-orientation layer reduces to plain convolution") {
  Rng rng(2);
  ArfLayer layer(1, 3, rng);
  Tensor x = rnd({1, 6, 6}, rng);
  Tensor got = layer.forward(x);
  Tensor kernels = reshape(layer.canonical(), {1, 1, 3, 3});
  Tensor want = conv2d(x, kernels, 1, 1);
  for (size_t i = 0; i < got.data().size(); ++i)
    CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
}

TEST_CASE("oriented response commutes with rotation plus channel shift") {
  Rng rng(3);
  const int g = 8;
  ArfLayer layer(4, 3, rng);
  Tensor x = rnd({4, g, g}, rng);

  Tensor fx = layer.forward(x);
  Tensor tx = Tensor::from_data({4, g, g},
                                shift_channels(rot90_stack(x.data(), 4, g), 4, g));
  Tensor ftx = layer.forward(tx);
  const std::vector<double> want =
      shift_channels(rot90_stack(fx.data(), 4, g), 4, g);
  // square maps with zero same-padding rotate cleanly, so every pixel agrees
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(ftx.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("or_pool takes the channelwise max") {
  Tensor f = Tensor::from_data({3, 1, 2}, {1, -2, 3, 4, 2, 1});
  Tensor o = or_pool(f);
  REQUIRE(o.shape() == Shape{1, 1, 2});
  CHECK(o.data()[0] == 3.0);
  CHECK(o.data()[1] == 4.0);
}

TEST_CASE("or_pool output is invariant to any cyclic channel shift") {
  Rng rng(4);
  const int n = 4, g = 5;
  Tensor x = rnd({n, g, g}, rng);
  Tensor base = or_pool(x);
  std::vector<double> rolled = x.data();
  for (int shift = 1; shift < n; ++shift) {
    rolled = shift_channels(rolled, n, g);
    Tensor out = or_pool(Tensor::from_data({n, g, g}, rolled));
    CHECK(out.data() == base.data());  // exact
  }
}

TEST_CASE("or_pool ties route gradient to the lowest channel") {
  Tensor x = Tensor::from_data({2, 1, 1}, {1.0, 1.0}, true);
  backward(sum(or_pool(x)));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("rotation invariance of the pooled response under 90-degree turns") {
  Rng rng(5);
  const int g = 8;
  ArfLift lift(4, 3, rng);
  ArfLayer layer(4, 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rnd({1, g, g}, rng);
    Tensor o = or_pool(layer.forward(lift.forward(x)));
    // rotating the single-channel input rotates the pooled map, exactly
    Tensor xr = Tensor::from_data({1, g, g}, rot90_stack(x.data(), 1, g));
    Tensor onr = or_pool(layer.forward(lift.forward(xr)));
    const std::vector<double> want = rot90_stack(o.data(), 1, g);
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(onr.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
  }
}

TEST_CASE("fresh localization head emits the identity transform exactly") {
  Rng rng(6);
  LocalizationHead head(8, rng);
  Tensor o = rnd({1, 8, 8}, rng);
  Tensor params = head.forward(o);
  REQUIRE(params.shape() == Shape{1, 6});
  CHECK(params.data() == std::vector<double>{1, 0, 0, 0, 1, 0});
  // and stays finite for an all-zero input
  Tensor z = head.forward(Tensor::zeros({1, 8, 8}));
  for (double v : z.data()) CHECK(std::isfinite(v));
}

TEST_CASE("align with identity params reproduces the embedding") {
  Rng rng(7);
  const int g = 10, e = 6;
  Tensor tokens = rnd({g * g, e}, rng);
  Tensor aligned = align_tokens(tokens, AffineParams::identity().to_tensor(), g);
  REQUIRE(aligned.shape() == tokens.shape());
  for (size_t i = 0; i < tokens.data().size(); ++i)
    CHECK(std::abs(aligned.data()[i] - tokens.data()[i]) < 1e-12);
}

TEST_CASE("translation by one token cell shifts tokens with zero fill") {
  Rng rng(8);
  const int g = 6, e = 3;
  Tensor tokens = rnd({g * g, e}, rng);
  // tx of one cell in normalized units: output (r,c) reads input (r, c+1)
  AffineParams p;
  p.m = {1, 0, 2.0 / (g - 1), 0, 1, 0};
  Tensor shifted = align_tokens(tokens, p.to_tensor(), g);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      for (int ch = 0; ch < e; ++ch) {
        const double got = shifted.data()[(size_t(r) * g + c) * e + ch];
        const double want =
            c + 1 < g ? tokens.data()[(size_t(r) * g + c + 1) * e + ch] : 0.0;
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("rotation by pi flips the token grid") {
  Rng rng(9);
  const int g = 5, e = 4;
  Tensor tokens = rnd({g * g, e}, rng);
  AffineParams p;
  p.m = {-1, 0, 0, 0, -1, 0};
  Tensor flipped = align_tokens(tokens, p.to_tensor(), g);
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c)
      for (int ch = 0; ch < e; ++ch)
        CHECK(flipped.data()[(size_t(r) * g + c) * e + ch] ==
              doctest::Approx(
                  tokens.data()[(size_t(g - 1 - r) * g + (g - 1 - c)) * e + ch])
                  .epsilon(1e-9));
}

TEST_CASE("align then inverse align restores interior tokens") {
  Rng rng(10);
  const int g = 12, e = 3;
  Tensor tokens = rnd({g * g, e}, rng);
  // double bilinear resampling errs by ~delta * second difference, with
  // delta = angle * radius in cells; a 1e-8 turn keeps that below 1e-6
  const double ang = 1e-8;
  AffineParams fwd, inv;
  fwd.m = {std::cos(ang), -std::sin(ang), 0.0,
           std::sin(ang), std::cos(ang), 0.0};
  inv.m = {std::cos(-ang), -std::sin(-ang), 0.0,
           std::sin(-ang), std::cos(-ang), 0.0};
  Tensor roundtrip =
      align_tokens(align_tokens(tokens, fwd.to_tensor(), g), inv.to_tensor(), g);
  // compare away from the border where resampling pulled zeros in
  int checked = 0;
  double worst = 0.0;
  for (int r = 3; r < g - 3; ++r)
    for (int c = 3; c < g - 3; ++c)
      for (int ch = 0; ch < e; ++ch) {
        const size_t i = (size_t(r) * g + c) * e + ch;
        worst = std::max(worst,
                         std::abs(roundtrip.data()[i] - tokens.data()[i]));
        ++checked;
      }
  CHECK(checked > 0);
  CHECK(worst < 1e-6);
}

TEST_CASE("kea module on a fresh init is the identity on tokens") {
  Rng rng(11);
  KeaModule kea(6, 8, 4, 3, rng);
  Tensor tokens = rnd({64, 6}, rng);
  Tensor out = kea.forward(tokens);
  for (size_t i = 0; i < tokens.data().size(); ++i)
    CHECK(std::abs(out.data()[i] - tokens.data()[i]) < 1e-12);
}

TEST_CASE("kea end-to-end gradients reach kernels, head and embedding") {
  Rng rng(12);
  KeaModule kea(6, 8, 4, 3, rng);
  ParamMap params;
  kea.collect_params("kea", params);
  Rng jitter(13);
  for (auto& [name, t] : params.items)
    for (double& v : t.data()) v += jitter.uniform(-0.05, 0.05);
  Tensor tokens = rnd({64, 6}, rng);
  tokens.set_requires_grad(true);
  params.zero_grad();
  backward(mean(kea.forward(tokens)));
  double token_norm = 0.0;
  for (double gv : tokens.grad()) token_norm += gv * gv;
  CHECK(token_norm > 0.0);
  for (auto& [name, t] : params.items) {
    double norm = 0.0;
    for (double gv : t.grad()) norm += gv * gv;
    INFO(name);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("arf layer rejects mismatched orientation counts") {
  Rng rng(14);
  ArfLayer layer(4, 3, rng);
  CHECK_THROWS_AS(layer.forward(Tensor::zeros({3, 5, 5})), ShapeError);
}

}  // TEST_SUITE
