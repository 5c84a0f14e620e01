#include "priorlane/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "priorlane/errors.hpp"
#include "priorlane/kernels.hpp"

namespace priorlane {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<Tensor> inputs, std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const Tensor& t : inputs)
    if (t.defined() && t.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    for (const Tensor& t : inputs)
      if (t.defined()) n->inputs.push_back(t.node());
    n->backprop = std::move(bp);
  }
  return Tensor(std::move(n));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
}

// outer * extent * inner decomposition around one axis
struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < int(s.size()); ++i) {
    if (i < axis)
      r.outer *= s[i];
    else if (i == axis)
      r.extent = s[i];
    else
      r.inner *= s[i];
  }
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.data().size());
  kernels::vadd(int(out.size()), a.data().data(), b.data().data(), out.data());
  return make_node(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    const int n = int(self.value.size());
    Tensor ta = a, tb = b;
    if (ta.requires_grad())
      kernels::axpy(n, 1.0, self.grad.data(), ta.grad().data());
    if (tb.requires_grad())
      kernels::axpy(n, 1.0, self.grad.data(), tb.grad().data());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.data().size());
  kernels::vsub(int(out.size()), a.data().data(), b.data().data(), out.data());
  return make_node(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    const int n = int(self.value.size());
    Tensor ta = a, tb = b;
    if (ta.requires_grad())
      kernels::axpy(n, 1.0, self.grad.data(), ta.grad().data());
    if (tb.requires_grad())
      kernels::axpy(n, -1.0, self.grad.data(), tb.grad().data());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.data().size());
  kernels::vmul(int(out.size()), a.data().data(), b.data().data(), out.data());
  return make_node(a.shape(), std::move(out), {a, b}, [a, b](Node& self) {
    const int n = int(self.value.size());
    Tensor ta = a, tb = b;
    if (ta.requires_grad())
      kernels::vmul_acc(n, self.grad.data(), tb.data().data(),
                        ta.grad().data());
    if (tb.requires_grad())
      kernels::vmul_acc(n, self.grad.data(), ta.data().data(),
                        tb.grad().data());
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.data().size());
  kernels::vscale(int(out.size()), c, x.data().data(), out.data());
  return make_node(x.shape(), std::move(out), {x}, [x, c](Node& self) {
    Tensor tx = x;
    kernels::axpy(int(self.value.size()), c, self.grad.data(),
                  tx.grad().data());
  });
}

Tensor add_const(const Tensor& x, double c) {
  std::vector<double> out(x.data());
  for (double& v : out) v += c;
  return make_node(x.shape(), std::move(out), {x}, [x](Node& self) {
    Tensor tx = x;
    kernels::axpy(int(self.value.size()), 1.0, self.grad.data(),
                  tx.grad().data());
  });
}

Tensor gelu(const Tensor& x) {
  const auto& v = x.data();
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * kInvSqrt2));
  return make_node(x.shape(), std::move(out), {x}, [x](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    const auto& v = tx.data();
    for (size_t i = 0; i < v.size(); ++i) {
      const double phi = 0.5 * (1.0 + std::erf(v[i] * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v[i] * v[i]);
      gx[i] += self.grad[i] * (phi + v[i] * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto& v = x.data();
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
  return make_node(x.shape(), std::move(out), {x}, [x](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    for (size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      gx[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor broadcast_mul(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1)
    throw ShapeError("broadcast_mul: scalar operand has shape " +
                     shape_str(s.shape()));
  std::vector<double> out(x.data().size());
  kernels::vscale(int(out.size()), s.data()[0], x.data().data(), out.data());
  return make_node(x.shape(), std::move(out), {x, s}, [x, s](Node& self) {
    Tensor tx = x, ts = s;
    const int n = int(self.value.size());
    if (tx.requires_grad())
      kernels::axpy(n, ts.data()[0], self.grad.data(), tx.grad().data());
    if (ts.requires_grad()) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += self.grad[i] * tx.data()[i];
      ts.grad()[0] += acc;
    }
  });
}

Tensor broadcast_add(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1)
    throw ShapeError("broadcast_add: scalar operand has shape " +
                     shape_str(s.shape()));
  std::vector<double> out(x.data());
  const double sv = s.data()[0];
  for (double& v : out) v += sv;
  return make_node(x.shape(), std::move(out), {x, s}, [x, s](Node& self) {
    Tensor tx = x, ts = s;
    const int n = int(self.value.size());
    if (tx.requires_grad())
      kernels::axpy(n, 1.0, self.grad.data(), tx.grad().data());
    if (ts.requires_grad()) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += self.grad[i];
      ts.grad()[0] += acc;
    }
  });
}

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(s));
  std::vector<double> out(x.data());
  return make_node(std::move(s), std::move(out), {x}, [x](Node& self) {
    Tensor tx = x;
    kernels::axpy(int(self.value.size()), 1.0, self.grad.data(),
                  tx.grad().data());
  });
}

Tensor transpose2d(const Tensor& x) {
  if (x.rank() != 2)
    throw ShapeError("transpose2d: expected rank 2, got " +
                     shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(size_t(m) * n);
  const auto& v = x.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(j) * m + i] = v[size_t(i) * n + j];
  return make_node({n, m}, std::move(out), {x}, [x, m, n](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        gx[size_t(i) * n + j] += self.grad[size_t(j) * m + i];
  });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (int(axes.size()) != r)
    throw ShapeError("permute: axes count " + std::to_string(axes.size()) +
                     " vs rank " + std::to_string(r));
  std::vector<bool> seen(size_t(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[size_t(a)])
      throw ShapeError("permute: invalid axes");
    seen[size_t(a)] = true;
  }
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[size_t(i)] = x.dim(axes[size_t(i)]);

  std::vector<int64_t> in_strides(size_t(r), 1), out_strides(size_t(r), 1);
  for (int i = r - 2; i >= 0; --i)
    in_strides[size_t(i)] = in_strides[size_t(i) + 1] * x.dim(i + 1);
  for (int i = r - 2; i >= 0; --i)
    out_strides[size_t(i)] = out_strides[size_t(i) + 1] * out_shape[size_t(i) + 1];

  const int64_t total = x.numel();
  // map[dst] = src
  auto mapping = std::make_shared<std::vector<int64_t>>(size_t(total));
  std::vector<int64_t> idx(size_t(r), 0);
  for (int64_t dst = 0; dst < total; ++dst) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i)
      src += idx[size_t(i)] * in_strides[size_t(axes[size_t(i)])];
    (*mapping)[size_t(dst)] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[size_t(i)] < out_shape[size_t(i)]) break;
      idx[size_t(i)] = 0;
    }
  }
  std::vector<double> out(static_cast<size_t>(total));
  const auto& v = x.data();
  for (int64_t dst = 0; dst < total; ++dst)
    out[size_t(dst)] = v[size_t((*mapping)[size_t(dst)])];
  return make_node(std::move(out_shape), std::move(out), {x},
                   [x, mapping](Node& self) {
                     Tensor tx = x;
                     auto& gx = tx.grad();
                     for (size_t dst = 0; dst < self.value.size(); ++dst)
                       gx[size_t((*mapping)[dst])] += self.grad[dst];
                   });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const int r = xs[0].rank();
  if (axis < 0 || axis >= r) throw ShapeError("concat: bad axis");
  Shape out_shape = xs[0].shape();
  int64_t axis_total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && t.dim(i) != out_shape[size_t(i)])
        throw ShapeError("concat: shapes " + shape_str(out_shape) + " and " +
                         shape_str(t.shape()) + " differ off-axis");
    axis_total += t.dim(axis);
  }
  out_shape[size_t(axis)] = int(axis_total);

  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<double> out(size_t(shape_numel(out_shape)));
  int64_t offset = 0;  // running offset along axis
  for (const Tensor& t : xs) {
    const int64_t ext = t.dim(axis);
    const auto& v = t.data();
    for (int64_t o = 0; o < sp.outer; ++o)
      std::memcpy(out.data() + (o * sp.extent + offset) * sp.inner,
                  v.data() + o * ext * sp.inner,
                  size_t(ext * sp.inner) * sizeof(double));
    offset += ext;
  }
  std::vector<Tensor> inputs = xs;
  return make_node(
      std::move(out_shape), std::move(out), inputs,
      [inputs, sp, axis](Node& self) {
        int64_t offset = 0;
        for (const Tensor& t : inputs) {
          Tensor tt = t;
          const int64_t ext = tt.dim(axis);
          if (tt.requires_grad()) {
            auto& gx = tt.grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
              const double* src =
                  self.grad.data() + (o * sp.extent + offset) * sp.inner;
              kernels::axpy(int(ext * sp.inner), 1.0, src,
                            gx.data() + o * ext * sp.inner);
            }
          }
          offset += ext;
        }
      });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  const int r = x.rank();
  if (axis < 0 || axis >= r) throw ShapeError("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") exceeds " +
                     shape_str(x.shape()) + " on axis " + std::to_string(axis));
  const AxisSplit sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[size_t(axis)] = len;
  std::vector<double> out(size_t(shape_numel(out_shape)));
  const auto& v = x.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    std::memcpy(out.data() + o * len * sp.inner,
                v.data() + (o * sp.extent + start) * sp.inner,
                size_t(len) * size_t(sp.inner) * sizeof(double));
  return make_node(std::move(out_shape), std::move(out), {x},
                   [x, sp, start, len](Node& self) {
                     Tensor tx = x;
                     auto& gx = tx.grad();
                     for (int64_t o = 0; o < sp.outer; ++o)
                       kernels::axpy(int(len * sp.inner), 1.0,
                                     self.grad.data() + o * len * sp.inner,
                                     gx.data() + (o * sp.extent + start) * sp.inner);
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(size_t(m) * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_node({m, n}, std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    Tensor ta = a, tb = b;
    if (ta.requires_grad()) {
      // dA += G * B^T
      std::vector<double> bt(size_t(n) * k);
      const auto& bv = tb.data();
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j)
          bt[size_t(j) * k + i] = bv[size_t(i) * n + j];
      kernels::matmul(self.grad.data(), bt.data(), ta.grad().data(), m, n, k,
                      /*accumulate=*/true);
    }
    if (tb.requires_grad()) {
      // dB += A^T * G
      std::vector<double> at(size_t(k) * m);
      const auto& av = ta.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
          at[size_t(j) * m + i] = av[size_t(i) * k + j];
      kernels::matmul(at.data(), self.grad.data(), tb.grad().data(), k, m, n,
                      /*accumulate=*/true);
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  for (double v : x.data())
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  const AxisSplit sp = split_axis(x.shape(), axis);
  std::vector<double> out(x.data().size());
  const auto& v = x.data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t in = 0; in < sp.inner; ++in) {
      const int64_t base = o * sp.extent * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t e = 0; e < sp.extent; ++e)
        mx = std::max(mx, v[size_t(base + e * sp.inner)]);
      double denom = 0.0;
      for (int64_t e = 0; e < sp.extent; ++e) {
        const double ev = std::exp(v[size_t(base + e * sp.inner)] - mx);
        out[size_t(base + e * sp.inner)] = ev;
        denom += ev;
      }
      for (int64_t e = 0; e < sp.extent; ++e)
        out[size_t(base + e * sp.inner)] /= denom;
    }
  }
  return make_node(x.shape(), std::move(out), {x}, [x, sp](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t in = 0; in < sp.inner; ++in) {
        const int64_t base = o * sp.extent * sp.inner + in;
        double dot = 0.0;
        for (int64_t e = 0; e < sp.extent; ++e) {
          const size_t i = size_t(base + e * sp.inner);
          dot += self.grad[i] * self.value[i];
        }
        for (int64_t e = 0; e < sp.extent; ++e) {
          const size_t i = size_t(base + e * sp.inner);
          gx[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const int d = x.dim(x.rank() - 1);
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: feature dim " + std::to_string(d) +
                     " vs gamma " + shape_str(gamma.shape()) + ", beta " +
                     shape_str(beta.shape()));
  const int64_t rows = x.numel() / d;
  std::vector<double> out(x.data().size());
  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto inv_std = std::make_shared<std::vector<double>>(size_t(rows));
  const auto& v = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += row[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[size_t(r)] = istd;
    for (int i = 0; i < d; ++i) {
      const double xh = (row[i] - mu) * istd;
      (*xhat)[size_t(r * d + i)] = xh;
      out[size_t(r * d + i)] = gv[size_t(i)] * xh + bv[size_t(i)];
    }
  }
  return make_node(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, rows, d](Node& self) {
        Tensor tx = x, tg = gamma, tb = beta;
        const auto& gv = tg.data();
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* xh = xhat->data() + r * d;
          if (tg.requires_grad()) {
            auto& gg = tg.grad();
            for (int i = 0; i < d; ++i) gg[size_t(i)] += g[i] * xh[i];
          }
          if (tb.requires_grad()) {
            auto& gb = tb.grad();
            for (int i = 0; i < d; ++i) gb[size_t(i)] += g[i];
          }
          if (tx.requires_grad()) {
            double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
            for (int i = 0; i < d; ++i) {
              const double dxh = g[i] * gv[size_t(i)];
              m1 += dxh;
              m2 += dxh * xh[i];
            }
            m1 /= d;
            m2 /= d;
            auto& gx = tx.grad();
            const double istd = (*inv_std)[size_t(r)];
            for (int i = 0; i < d; ++i) {
              const double dxh = g[i] * gv[size_t(i)];
              gx[size_t(r * d + i)] += istd * (dxh - m1 - xh[i] * m2);
            }
          }
        }
      });
}

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  if (x.rank() != 2 || b.numel() != x.dim(1))
    throw ShapeError("add_rowwise: " + shape_str(x.shape()) + " vs " +
                     shape_str(b.shape()));
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.data().size());
  const auto& v = x.data();
  const auto& bv = b.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[size_t(i) * d + j] = v[size_t(i) * d + j] + bv[size_t(j)];
  return make_node(x.shape(), std::move(out), {x, b}, [x, b, n, d](Node& self) {
    Tensor tx = x, tb = b;
    if (tx.requires_grad())
      kernels::axpy(n * d, 1.0, self.grad.data(), tx.grad().data());
    if (tb.requires_grad()) {
      auto& gb = tb.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gb[size_t(j)] += self.grad[size_t(i) * d + j];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (b.defined()) y = add_rowwise(y, b);
  return y;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  if (x.rank() != 3 || b.numel() != x.dim(0))
    throw ShapeError("add_channel_bias: " + shape_str(x.shape()) + " vs " +
                     shape_str(b.shape()));
  const int c = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  std::vector<double> out(x.data().size());
  const auto& v = x.data();
  const auto& bv = b.data();
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < hw; ++i)
      out[size_t(ch * hw + i)] = v[size_t(ch * hw + i)] + bv[size_t(ch)];
  return make_node(x.shape(), std::move(out), {x, b}, [x, b, c, hw](Node& self) {
    Tensor tx = x, tb = b;
    if (tx.requires_grad())
      kernels::axpy(int(c * hw), 1.0, self.grad.data(), tx.grad().data());
    if (tb.requires_grad()) {
      auto& gb = tb.grad();
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t i = 0; i < hw; ++i) acc += self.grad[size_t(ch * hw + i)];
        gb[size_t(ch)] += acc;
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_node({1}, {acc}, {x}, [x](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    const double g = self.grad[0];
    for (double& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / double(x.numel());
  return make_node({1}, {acc * inv}, {x}, [x, inv](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    const double g = self.grad[0] * inv;
    for (double& v : gx) v += g;
  });
}

Tensor reduce_max0(const Tensor& x) {
  if (x.rank() < 1 || x.dim(0) < 1)
    throw ShapeError("reduce_max0: needs a non-empty leading axis, got " +
                     shape_str(x.shape()));
  const int n = x.dim(0);
  const int64_t inner = x.numel() / n;
  Shape out_shape = x.shape();
  out_shape[0] = 1;
  std::vector<double> out(static_cast<size_t>(inner));
  auto argmax = std::make_shared<std::vector<int>>(size_t(inner), 0);
  const auto& v = x.data();
  for (int64_t i = 0; i < inner; ++i) {
    double best = v[size_t(i)];
    int best_n = 0;
    for (int c = 1; c < n; ++c) {
      const double cand = v[size_t(c * inner + i)];
      if (cand > best) {  // strict: ties stay with the lowest index
        best = cand;
        best_n = c;
      }
    }
    out[size_t(i)] = best;
    (*argmax)[size_t(i)] = best_n;
  }
  return make_node(std::move(out_shape), std::move(out), {x},
                   [x, argmax, inner](Node& self) {
                     Tensor tx = x;
                     auto& gx = tx.grad();
                     for (int64_t i = 0; i < inner; ++i)
                       gx[size_t((*argmax)[size_t(i)] * inner + i)] +=
                           self.grad[size_t(i)];
                   });
}

Tensor spatial_mean(const Tensor& x) {
  if (x.rank() != 3)
    throw ShapeError("spatial_mean: expected [C,H,W], got " +
                     shape_str(x.shape()));
  const int c = x.dim(0);
  const int64_t hw = int64_t(x.dim(1)) * x.dim(2);
  const double inv = 1.0 / double(hw);
  std::vector<double> out(static_cast<size_t>(c));
  const auto& v = x.data();
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += v[size_t(ch * hw + i)];
    out[size_t(ch)] = acc * inv;
  }
  return make_node({c}, std::move(out), {x}, [x, c, hw, inv](Node& self) {
    Tensor tx = x;
    auto& gx = tx.grad();
    for (int ch = 0; ch < c; ++ch) {
      const double g = self.grad[size_t(ch)] * inv;
      for (int64_t i = 0; i < hw; ++i) gx[size_t(ch * hw + i)] += g;
    }
  });
}

namespace {

void im2col(const double* x, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, double* col) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (size_t(ci) * k * k + size_t(ky) * k + kx) *
                                size_t(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + size_t(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, sizeof(double) * size_t(ow));
            continue;
          }
          const double* src = x + (size_t(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int c, int h, int w, int k, int stride,
                int pad, int oh, int ow, double* gx) {
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (size_t(ci) * k * k + size_t(ky) * k + kx) *
                                      size_t(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + size_t(oy) * ow;
          double* dst = gx + (size_t(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv_impl(const Tensor& x, const Tensor& kernels_t, int stride, int pad,
                 int oh, int ow) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = kernels_t.dim(0), k = kernels_t.dim(2);
  const size_t ckk = size_t(cin) * k * k;
  const size_t ohw = size_t(oh) * ow;
  auto col = std::make_shared<std::vector<double>>(ckk * ohw);
  im2col(x.data().data(), cin, h, w, k, stride, pad, oh, ow, col->data());
  std::vector<double> out(size_t(cout) * ohw);
  kernels::matmul(kernels_t.data().data(), col->data(), out.data(), cout,
                  int(ckk), int(ohw));
  return make_node(
      {cout, oh, ow}, std::move(out), {x, kernels_t},
      [x, kernels_t, col, stride, pad, oh, ow](Node& self) {
        Tensor tx = x, tk = kernels_t;
        const int cin = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
        const int cout = tk.dim(0), k = tk.dim(2);
        const size_t ckk = size_t(cin) * k * k;
        const size_t ohw = size_t(oh) * ow;
        if (tk.requires_grad()) {
          // dK += G * col^T
          std::vector<double> colt(ohw * ckk);
          for (size_t r = 0; r < ckk; ++r)
            for (size_t cidx = 0; cidx < ohw; ++cidx)
              colt[cidx * ckk + r] = (*col)[r * ohw + cidx];
          kernels::matmul(self.grad.data(), colt.data(), tk.grad().data(),
                          cout, int(ohw), int(ckk), /*accumulate=*/true);
        }
        if (tx.requires_grad()) {
          // dcol = K^T * G, then scatter back
          std::vector<double> kt(ckk * size_t(cout));
          const auto& kv = tk.data();
          for (int r = 0; r < cout; ++r)
            for (size_t cidx = 0; cidx < ckk; ++cidx)
              kt[cidx * size_t(cout) + size_t(r)] = kv[size_t(r) * ckk + cidx];
          std::vector<double> dcol(ckk * ohw);
          kernels::matmul(kt.data(), self.grad.data(), dcol.data(), int(ckk),
                          cout, int(ohw));
          col2im_add(dcol.data(), cin, h, w, k, stride, pad, oh, ow,
                     tx.grad().data());
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels_t, int stride,
              int padding) {
  if (x.rank() != 3 || kernels_t.rank() != 4)
    throw ShapeError("conv2d: expected [C,H,W] and [Cout,Cin,K,K], got " +
                     shape_str(x.shape()) + " and " +
                     shape_str(kernels_t.shape()));
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int k = kernels_t.dim(2);
  if (kernels_t.dim(3) != k || k % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd extent, got " +
                     shape_str(kernels_t.shape()));
  if (kernels_t.dim(1) != cin)
    throw ShapeError("conv2d: input channels " + shape_str(x.shape()) +
                     " vs kernels " + shape_str(kernels_t.shape()));
  if (padding < 0 || stride < 1) throw ShapeError("conv2d: bad stride/padding");
  const int hn = h + 2 * padding - k;
  const int wn = w + 2 * padding - k;
  if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
    throw ShapeError("conv2d: non-integral output extent for input " +
                     shape_str(x.shape()) + ", kernel " +
                     shape_str(kernels_t.shape()) + ", stride " +
                     std::to_string(stride) + ", padding " +
                     std::to_string(padding));
  return conv_impl(x, kernels_t, stride, padding, hn / stride + 1,
                   wn / stride + 1);
}

Tensor overlap_patch_merge(const Tensor& x, const Tensor& kernels_t,
                           int stride) {
  if (x.rank() != 3 || kernels_t.rank() != 4)
    throw ShapeError("overlap_patch_merge: expected [C,H,W] and [Cout,Cin,K,K]");
  const int h = x.dim(1), w = x.dim(2);
  const int k = kernels_t.dim(2);
  if (k % 2 == 0 || k < stride)
    throw ShapeError("overlap_patch_merge: kernel " + std::to_string(k) +
                     " must be odd and cover stride " + std::to_string(stride));
  if (h % stride != 0 || w % stride != 0)
    throw ShapeError("overlap_patch_merge: input " + shape_str(x.shape()) +
                     " not divisible by stride " + std::to_string(stride));
  const int pad = (k - stride + 1) / 2;
  return conv_impl(x, kernels_t, stride, pad, h / stride, w / stride);
}

Tensor avg_pool2d(const Tensor& x, int window, int stride) {
  if (x.rank() != 3)
    throw ShapeError("avg_pool2d: expected [C,H,W], got " +
                     shape_str(x.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (window < 1 || stride < 1 || (h - window) % stride != 0 ||
      (w - window) % stride != 0 || window > h || window > w)
    throw ShapeError("avg_pool2d: window " + std::to_string(window) +
                     " stride " + std::to_string(stride) + " does not tile " +
                     shape_str(x.shape()));
  const int oh = (h - window) / stride + 1;
  const int ow = (w - window) / stride + 1;
  const double inv = 1.0 / double(window * window);
  std::vector<double> out(size_t(c) * oh * ow);
  const auto& v = x.data();
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int ky = 0; ky < window; ++ky)
          for (int kx = 0; kx < window; ++kx)
            acc += v[(size_t(ch) * h + oy * stride + ky) * w + ox * stride + kx];
        out[(size_t(ch) * oh + oy) * ow + ox] = acc * inv;
      }
  return make_node({c, oh, ow}, std::move(out), {x},
                   [x, c, h, w, oh, ow, window, stride, inv](Node& self) {
                     Tensor tx = x;
                     auto& gx = tx.grad();
                     for (int ch = 0; ch < c; ++ch)
                       for (int oy = 0; oy < oh; ++oy)
                         for (int ox = 0; ox < ow; ++ox) {
                           const double g =
                               self.grad[(size_t(ch) * oh + oy) * ow + ox] * inv;
                           for (int ky = 0; ky < window; ++ky)
                             for (int kx = 0; kx < window; ++kx)
                               gx[(size_t(ch) * h + oy * stride + ky) * w +
                                  ox * stride + kx] += g;
                         }
                   });
}

Tensor grid_sample(const Tensor& x, const Tensor& grid) {
  if (x.rank() != 3 || grid.rank() != 3 || grid.dim(2) != 2)
    throw ShapeError("grid_sample: expected [C,H,W] and [Hg,Wg,2], got " +
                     shape_str(x.shape()) + " and " + shape_str(grid.shape()));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int gh = grid.dim(0), gw = grid.dim(1);
  std::vector<double> out(size_t(c) * gh * gw, 0.0);
  const auto& v = x.data();
  const auto& g = grid.data();
  const double sx = 0.5 * (w - 1);
  const double sy = 0.5 * (h - 1);
  auto sample = [&](int gy, int gx_) {
    const double ix = (g[(size_t(gy) * gw + gx_) * 2 + 0] + 1.0) * sx;
    const double iy = (g[(size_t(gy) * gw + gx_) * 2 + 1] + 1.0) * sy;
    const int x0 = int(std::floor(ix)), y0 = int(std::floor(iy));
    const double wx = ix - x0, wy = iy - y0;
    const double cw[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy,
                          wx * wy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int t = 0; t < 4; ++t)
        if (xs[t] >= 0 && xs[t] < w && ys[t] >= 0 && ys[t] < h)
          acc += cw[t] * v[(size_t(ch) * h + ys[t]) * w + xs[t]];
      out[(size_t(ch) * gh + gy) * gw + gx_] = acc;
    }
  };
  for (int gy = 0; gy < gh; ++gy)
    for (int gx_ = 0; gx_ < gw; ++gx_) sample(gy, gx_);

  return make_node(
      {c, gh, gw}, std::move(out), {x, grid},
      [x, grid, c, h, w, gh, gw, sx, sy](Node& self) {
        Tensor tx = x, tg = grid;
        const auto& v = tx.data();
        const auto& g = tg.data();
        for (int gy = 0; gy < gh; ++gy) {
          for (int gx_ = 0; gx_ < gw; ++gx_) {
            const double ix = (g[(size_t(gy) * gw + gx_) * 2 + 0] + 1.0) * sx;
            const double iy = (g[(size_t(gy) * gw + gx_) * 2 + 1] + 1.0) * sy;
            const int x0 = int(std::floor(ix)), y0 = int(std::floor(iy));
            const double wx = ix - x0, wy = iy - y0;
            double dix = 0.0, diy = 0.0;
            for (int ch = 0; ch < c; ++ch) {
              const double go = self.grad[(size_t(ch) * gh + gy) * gw + gx_];
              if (go == 0.0 && !tg.requires_grad()) continue;
              const double cw[4] = {(1 - wx) * (1 - wy), wx * (1 - wy),
                                    (1 - wx) * wy, wx * wy};
              // d(weight)/d(ix), d(weight)/d(iy) per corner
              const double dwx[4] = {-(1 - wy), (1 - wy), -wy, wy};
              const double dwy[4] = {-(1 - wx), -wx, (1 - wx), wx};
              const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
              const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
              for (int t = 0; t < 4; ++t) {
                if (xs[t] < 0 || xs[t] >= w || ys[t] < 0 || ys[t] >= h)
                  continue;
                const size_t src = (size_t(ch) * h + ys[t]) * w + xs[t];
                if (tx.requires_grad()) tx.grad()[src] += go * cw[t];
                if (tg.requires_grad()) {
                  dix += go * dwx[t] * v[src];
                  diy += go * dwy[t] * v[src];
                }
              }
            }
            if (tg.requires_grad()) {
              tg.grad()[(size_t(gy) * gw + gx_) * 2 + 0] += dix * sx;
              tg.grad()[(size_t(gy) * gw + gx_) * 2 + 1] += diy * sy;
            }
          }
        }
      });
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.rank() != 3)
    throw ShapeError("upsample_bilinear: expected [C,H,W], got " +
                     shape_str(x.shape()));
  std::vector<double> gdata(size_t(out_h) * out_w * 2);
  for (int oy = 0; oy < out_h; ++oy) {
    const double yn = out_h > 1 ? -1.0 + 2.0 * oy / (out_h - 1) : 0.0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double xn = out_w > 1 ? -1.0 + 2.0 * ox / (out_w - 1) : 0.0;
      gdata[(size_t(oy) * out_w + ox) * 2 + 0] = xn;
      gdata[(size_t(oy) * out_w + ox) * 2 + 1] = yn;
    }
  }
  Tensor grid = Tensor::from_data({out_h, out_w, 2}, std::move(gdata));
  return grid_sample(x, grid);
}

namespace {

Tensor cross_entropy_impl(const Tensor& logits, const std::vector<int>& labels,
                          std::vector<double> per_row_weight) {
  const int n = logits.dim(0), k = logits.dim(1);
  auto probs = std::make_shared<std::vector<double>>(logits.data().size());
  const auto& v = logits.data();
  double loss = 0.0, weight_total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = v.data() + size_t(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    loss += per_row_weight[size_t(i)] * (lse - row[labels[size_t(i)]]);
    weight_total += per_row_weight[size_t(i)];
    for (int j = 0; j < k; ++j)
      (*probs)[size_t(i) * k + j] = std::exp(row[j] - lse);
  }
  loss /= weight_total;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto weights = std::make_shared<std::vector<double>>(std::move(per_row_weight));
  return make_node(
      {1}, {loss}, {logits},
      [logits, probs, labels_copy, weights, weight_total, n, k](Node& self) {
        Tensor tl = logits;
        auto& gx = tl.grad();
        const double g = self.grad[0] / weight_total;
        for (int i = 0; i < n; ++i) {
          const double gw = g * (*weights)[size_t(i)];
          for (int j = 0; j < k; ++j)
            gx[size_t(i) * k + j] += gw * (*probs)[size_t(i) * k + j];
          gx[size_t(i) * k + (*labels_copy)[size_t(i)]] -= gw;
        }
      });
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || int64_t(labels.size()) != logits.dim(0))
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  const int k = logits.dim(1);
  for (int lbl : labels)
    if (lbl < 0 || lbl >= k)
      throw DataError("cross_entropy: label " + std::to_string(lbl) +
                      " outside [0," + std::to_string(k) + ")");
  return cross_entropy_impl(logits, labels,
                            std::vector<double>(labels.size(), 1.0));
}

Tensor cross_entropy_weighted(const Tensor& logits,
                              const std::vector<int>& labels,
                              const std::vector<double>& class_weights) {
  if (logits.rank() != 2 || int64_t(labels.size()) != logits.dim(0))
    throw ShapeError("cross_entropy_weighted: logits " +
                     shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  const int k = logits.dim(1);
  if (int64_t(class_weights.size()) != k)
    throw ShapeError("cross_entropy_weighted: " +
                     std::to_string(class_weights.size()) + " weights for " +
                     std::to_string(k) + " classes");
  for (double w : class_weights)
    if (!(w > 0.0))
      throw ConfigError("cross_entropy_weighted: weights must be positive");
  std::vector<double> per_row(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const int lbl = labels[i];
    if (lbl < 0 || lbl >= k)
      throw DataError("cross_entropy_weighted: label " + std::to_string(lbl) +
                      " outside [0," + std::to_string(k) + ")");
    per_row[i] = class_weights[size_t(lbl)];
  }
  return cross_entropy_impl(logits, labels, std::move(per_row));
}

Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets) {
  if (int64_t(targets.size()) != logits.numel())
    throw ShapeError("bce_with_logits: " + shape_str(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  const int n = int(logits.numel());
  const auto& v = logits.data();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = v[size_t(i)];
    loss += std::max(z, 0.0) - z * targets[size_t(i)] +
            std::log1p(std::exp(-std::abs(z)));
  }
  loss /= n;
  auto t = std::make_shared<std::vector<double>>(targets);
  return make_node({1}, {loss}, {logits}, [logits, t, n](Node& self) {
    Tensor tl = logits;
    auto& gx = tl.grad();
    const double g = self.grad[0] / n;
    for (int i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-tl.data()[size_t(i)]));
      gx[size_t(i)] += g * (s - (*t)[size_t(i)]);
    }
  });
}

}  // namespace priorlane
