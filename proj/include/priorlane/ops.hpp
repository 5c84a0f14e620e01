#pragma once

// The op set the rest of the project is built from. All ops are pure; each
// returns a fresh node wired for reverse-mode differentiation.

#include <vector>

#include "priorlane/tensor.hpp"

namespace priorlane {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// s must have one element; it multiplies / shifts every element of x.
Tensor broadcast_mul(const Tensor& x, const Tensor& s);
Tensor broadcast_add(const Tensor& x, const Tensor& s);

// shape manipulation
Tensor reshape(const Tensor& x, Shape s);
Tensor transpose2d(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);

// linear algebra / nn primitives
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add_rowwise(const Tensor& x, const Tensor& b);      // x [n,d], b [d]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // x [C,H,W], b [C]

// reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [N, ...] -> [1, ...]; max over the leading axis, ties to the lowest index.
Tensor reduce_max0(const Tensor& x);
Tensor spatial_mean(const Tensor& x);  // [C,H,W] -> [C]

// convolution & sampling
// Cross-correlation, K odd, exact output extent required:
// out = (H + 2*pad - K) / stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& kernels, int stride, int padding);
// Overlapped K x K windows centered on stride x stride tiles; out = H/stride.
// Used for hierarchical patch merging where stride-divisible tiling matters
// more than exact conv arithmetic.
Tensor overlap_patch_merge(const Tensor& x, const Tensor& kernels, int stride);
Tensor avg_pool2d(const Tensor& x, int window, int stride);
// x [C,H,W], grid [Hg,Wg,2] with normalized (x,y) in [-1,1],
// align-corners-true, zeros outside. Differentiable in x and grid.
Tensor grid_sample(const Tensor& x, const Tensor& grid);
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);

// losses
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// weighted mean: sum_i w[y_i] * ce_i / sum_i w[y_i]
Tensor cross_entropy_weighted(const Tensor& logits,
                              const std::vector<int>& labels,
                              const std::vector<double>& class_weights);
Tensor bce_with_logits(const Tensor& logits,
                       const std::vector<double>& targets);

}  // namespace priorlane
