#include "priorlane/kea.hpp"

#include <cmath>

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"

namespace priorlane {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Transposed rotation matrices so canonical rows transform as
// rotated = canonical_rows * R^T.
std::vector<Tensor> make_rotations(int n, int k) {
  std::vector<Tensor> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Tensor r = rotation_matrix(k, double(i) * 2.0 * kPi / n);
    out.push_back(transpose2d(r).detach());
  }
  return out;
}

Tensor rotate_rows(const Tensor& rows, const Tensor& rot_t) {
  return matmul(rows, rot_t);
}

}  // namespace

Tensor rotation_matrix(int k, double theta) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("rotation_matrix: kernel extent must be odd, got " +
                      std::to_string(k));
  const int kk = k * k;
  std::vector<double> m(size_t(kk) * kk, 0.0);
  const double ctr = 0.5 * (k - 1);
  // Exact remap when theta is a multiple of 90 degrees.
  const double quarters = theta / (0.5 * kPi);
  const long q = std::lround(quarters);
  if (std::abs(quarters - double(q)) < 1e-12) {
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        int sr = r, sc = c;
        for (long t = 0; t < ((q % 4) + 4) % 4; ++t) {
          // one quarter turn: dst (r,c) reads src (c, k-1-r)
          const int nr = sc, nc = k - 1 - sr;
          sr = nr;
          sc = nc;
        }
        m[size_t(r * k + c) * kk + size_t(sr * k + sc)] = 1.0;
      }
    }
  } else {
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        const double x = c - ctr, y = r - ctr;
        const double sx = ct * x - st * y + ctr;
        const double sy = st * x + ct * y + ctr;
        const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        const double wx = sx - x0, wy = sy - y0;
        const double w[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy,
                             wx * wy};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int t = 0; t < 4; ++t)
          if (xs[t] >= 0 && xs[t] < k && ys[t] >= 0 && ys[t] < k)
            m[size_t(r * k + c) * kk + size_t(ys[t] * k + xs[t])] += w[t];
      }
    }
  }
  return Tensor::from_data({kk, kk}, std::move(m));
}

ArfLift::ArfLift(int orientations, int kernel, Rng& rng)
    : n_(orientations), k_(kernel) {
  if (n_ < 1) throw ConfigError("ArfLift: need at least one orientation");
  canonical_ = init_xavier({k_, k_}, k_ * k_, k_ * k_, rng);
  rotations_ = make_rotations(n_, k_);
}

Tensor ArfLift::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != 1)
    throw ShapeError("ArfLift: expected [1,H,W], got " + shape_str(x.shape()));
  Tensor flat = reshape(canonical_, {1, k_ * k_});
  std::vector<Tensor> banks;
  banks.reserve(size_t(n_));
  for (int i = 0; i < n_; ++i)
    banks.push_back(reshape(rotate_rows(flat, rotations_[size_t(i)]),
                            {1, 1, k_, k_}));
  Tensor kernels = concat(banks, 0);  // [N,1,K,K]
  return conv2d(x, kernels, 1, k_ / 2);
}

void ArfLift::collect_params(const std::string& prefix, ParamMap& out) {
  out.add(prefix + ".canonical", canonical_);
}

ArfLayer::ArfLayer(int orientations, int kernel, Rng& rng)
    : n_(orientations), k_(kernel) {
  if (n_ < 1) throw ConfigError("ArfLayer: need at least one orientation");
  canonical_ = init_xavier({n_, k_, k_}, n_ * k_ * k_, n_ * k_ * k_, rng);
  rotations_ = make_rotations(n_, k_);
}

Tensor ArfLayer::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(0) != n_)
    throw ShapeError("ArfLayer: expected [" + std::to_string(n_) +
                     ",H,W], got " + shape_str(x.shape()));
  Tensor flat = reshape(canonical_, {n_, k_ * k_});
  std::vector<Tensor> banks;
  banks.reserve(size_t(n_));
  for (int i = 0; i < n_; ++i) {
    // R_{theta_i}: spatially rotate every canonical slice, then shift the
    // orientation channels by i so slice n holds canonical[(n - i) mod N].
    Tensor rotated = rotate_rows(flat, rotations_[size_t(i)]);  // [N, K*K]
    std::vector<Tensor> rows;
    rows.reserve(size_t(n_));
    for (int ch = 0; ch < n_; ++ch)
      rows.push_back(slice(rotated, 0, ((ch - i) % n_ + n_) % n_, 1));
    banks.push_back(reshape(concat(rows, 0), {1, n_, k_, k_}));
  }
  Tensor kernels = concat(banks, 0);  // [N,N,K,K]
  return conv2d(x, kernels, 1, k_ / 2);
}

void ArfLayer::collect_params(const std::string& prefix, ParamMap& out) {
  out.add(prefix + ".canonical", canonical_);
}

Tensor or_pool(const Tensor& oriented) { return reduce_max0(oriented); }

LocalizationHead::LocalizationHead(int grid, Rng& rng) : grid_(grid) {
  if (grid_ % 4 != 0)
    throw ConfigError("LocalizationHead: grid " + std::to_string(grid_) +
                      " must be divisible by 4");
  conv_w_ = init_xavier({conv_channels_, 1, 3, 3}, 9, 9 * conv_channels_, rng);
  conv_b_ = Tensor::zeros({conv_channels_}, true);
  const int pooled = conv_channels_ * 16;  // 4x4 spatial after pooling
  fc1_w_ = init_xavier({pooled, hidden_}, pooled, hidden_, rng);
  fc1_b_ = Tensor::zeros({hidden_}, true);
  fc2_w_ = Tensor::zeros({hidden_, 6}, true);
  fc2_b_ = Tensor::from_data({6}, {1, 0, 0, 0, 1, 0}, true);
}

Tensor LocalizationHead::forward(const Tensor& o) const {
  if (o.rank() != 3 || o.dim(0) != 1 || o.dim(1) != grid_ || o.dim(2) != grid_)
    throw ShapeError("LocalizationHead: expected [1," + std::to_string(grid_) +
                     "," + std::to_string(grid_) + "], got " +
                     shape_str(o.shape()));
  Tensor f = gelu(add_channel_bias(conv2d(o, conv_w_, 1, 1), conv_b_));
  f = avg_pool2d(f, grid_ / 4, grid_ / 4);      // [8,4,4]
  f = reshape(f, {1, conv_channels_ * 16});
  f = gelu(linear(f, fc1_w_, fc1_b_));
  return linear(f, fc2_w_, fc2_b_);  // [1,6]
}

void LocalizationHead::collect_params(const std::string& prefix,
                                      ParamMap& out) {
  out.add(prefix + ".conv.w", conv_w_);
  out.add(prefix + ".conv.b", conv_b_);
  out.add(prefix + ".fc1.w", fc1_w_);
  out.add(prefix + ".fc1.b", fc1_b_);
  out.add(prefix + ".fc2.w", fc2_w_);
  out.add(prefix + ".fc2.b", fc2_b_);
}

Tensor affine_grid(const Tensor& params, int grid) {
  if (params.numel() != 6)
    throw ShapeError("affine_grid: params must have 6 elements, got " +
                     shape_str(params.shape()));
  const int g = grid;
  std::vector<double> xs(size_t(g) * g), ys(size_t(g) * g);
  for (int r = 0; r < g; ++r) {
    const double yn = g > 1 ? -1.0 + 2.0 * r / (g - 1) : 0.0;
    for (int c = 0; c < g; ++c) {
      const double xn = g > 1 ? -1.0 + 2.0 * c / (g - 1) : 0.0;
      xs[size_t(r) * g + c] = xn;
      ys[size_t(r) * g + c] = yn;
    }
  }
  Tensor xn = Tensor::from_data({g, g}, std::move(xs));
  Tensor yn = Tensor::from_data({g, g}, std::move(ys));
  Tensor p = reshape(params, {1, 6});
  auto coef = [&](int i) { return slice(p, 1, i, 1); };
  Tensor gx = broadcast_add(
      add(broadcast_mul(xn, coef(0)), broadcast_mul(yn, coef(1))), coef(2));
  Tensor gy = broadcast_add(
      add(broadcast_mul(xn, coef(3)), broadcast_mul(yn, coef(4))), coef(5));
  return concat({reshape(gx, {g, g, 1}), reshape(gy, {g, g, 1})}, 2);
}

Tensor align_tokens(const Tensor& tokens, const Tensor& params, int grid) {
  if (tokens.rank() != 2 || tokens.dim(0) != grid * grid)
    throw ShapeError("align_tokens: tokens " + shape_str(tokens.shape()) +
                     " do not form a " + std::to_string(grid) + "x" +
                     std::to_string(grid) + " grid");
  const int e = tokens.dim(1);
  Tensor map = permute(reshape(tokens, {grid, grid, e}), {2, 0, 1});
  Tensor sampled = grid_sample(map, affine_grid(params, grid));
  return transpose2d(reshape(sampled, {e, grid * grid}));
}

KeaModule::KeaModule(int embed_dim, int grid, int orientations, int kernel,
                     Rng& rng)
    : grid_(grid),
      reduce_w_(init_xavier({embed_dim, 1}, embed_dim, 1, rng)),
      lift_(orientations, kernel, rng),
      oriented_(orientations, kernel, rng),
      head_(grid, rng) {}

Tensor KeaModule::localize(const Tensor& tokens) const {
  Tensor material = reshape(matmul(tokens, reduce_w_), {1, grid_, grid_});
  Tensor oriented = oriented_.forward(lift_.forward(material));
  return head_.forward(or_pool(oriented));
}

Tensor KeaModule::forward(const Tensor& tokens) const {
  return align_tokens(tokens, localize(tokens), grid_);
}

void KeaModule::collect_params(const std::string& prefix, ParamMap& out) {
  out.add(prefix + ".reduce.w", reduce_w_);
  lift_.collect_params(prefix + ".arf1", out);
  oriented_.collect_params(prefix + ".arf2", out);
  head_.collect_params(prefix + ".loc", out);
}

}  // namespace priorlane
