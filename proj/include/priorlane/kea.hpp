#pragma once

// Knowledge Embedding Alignment: active rotation filters over the embedding
// grid extract orientation-sensitive features, ORPooling keeps the
// rotation-invariant part, a small localization head regresses an affine
// transform, and the ORIGINAL embedding is resampled under it.

#include <array>
#include <vector>

#include "priorlane/params.hpp"
#include "priorlane/tensor.hpp"

namespace priorlane {

// Row-major (a11, a12, tx, a21, a22, ty); sample = A * (xn, yn, 1)^T in
// normalized align-corners coordinates.
struct AffineParams {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};
  static AffineParams identity() { return {}; }
  Tensor to_tensor() const {
    return Tensor::from_data({1, 6}, {m[0], m[1], m[2], m[3], m[4], m[5]});
  }
};

// Constant [K^2 x K^2] matrix R with rotated_flat = R * canonical_flat.
// Quarter turns use an exact index remap; other angles interpolate
// bilinearly around the kernel center.
Tensor rotation_matrix(int k, double theta);

// First layer: one material channel lifted to N orientation channels by
// convolving with all N rotated copies of a single canonical K x K kernel.
class ArfLift {
 public:
  ArfLift() = default;
  ArfLift(int orientations, int kernel, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [1,H,W] -> [N,H,W]
  void collect_params(const std::string& prefix, ParamMap& out);
  const Tensor& canonical() const { return canonical_; }

 private:
  int n_ = 0, k_ = 0;
  Tensor canonical_;                 // [K,K]
  std::vector<Tensor> rotations_;   // transposed rotation matrices per theta_i
};

// Oriented layer: canonical [N,K,K]; output orientation i convolves with the
// canonical stack rotated by theta_i = i*2pi/N and cyclically shifted by i.
class ArfLayer {
 public:
  ArfLayer() = default;
  ArfLayer(int orientations, int kernel, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [N,H,W] -> [N,H,W]
  void collect_params(const std::string& prefix, ParamMap& out);
  const Tensor& canonical() const { return canonical_; }
  int orientations() const { return n_; }

 private:
  int n_ = 0, k_ = 0;
  Tensor canonical_;                // [N,K,K]
  std::vector<Tensor> rotations_;
};

// Elementwise max over orientation channels; ties route the gradient to the
// lowest channel index.
Tensor or_pool(const Tensor& oriented);

// conv -> gelu -> average pool -> two linear layers. The final layer starts
// at zero weights with an identity-transform bias, so an untrained module
// emits the identity affine.
class LocalizationHead {
 public:
  LocalizationHead() = default;
  LocalizationHead(int grid, Rng& rng);
  Tensor forward(const Tensor& o) const;  // [1,G,G] -> [1,6]
  void collect_params(const std::string& prefix, ParamMap& out);

 private:
  int grid_ = 0, conv_channels_ = 8, hidden_ = 32;
  Tensor conv_w_, conv_b_;
  Tensor fc1_w_, fc1_b_;
  Tensor fc2_w_, fc2_b_;
};

// Sampling grid [G,G,2] for affine params [1,6]; differentiable in params.
Tensor affine_grid(const Tensor& params, int grid);

// tokens [L,E] viewed as a (G x G) map, resampled under params, returned in
// the same [L,E] layout.
Tensor align_tokens(const Tensor& tokens, const Tensor& params, int grid);

class KeaModule {
 public:
  KeaModule() = default;
  KeaModule(int embed_dim, int grid, int orientations, int kernel, Rng& rng);

  // Localization branch only: embedding -> affine params [1,6].
  Tensor localize(const Tensor& tokens) const;
  // Full module: aligned embedding, same layout as the input tokens.
  Tensor forward(const Tensor& tokens) const;
  void collect_params(const std::string& prefix, ParamMap& out);

  int grid() const { return grid_; }

 private:
  int grid_ = 0;
  Tensor reduce_w_;  // [E_p, 1] material-channel reduction
  ArfLift lift_;
  ArfLayer oriented_;
  LocalizationHead head_;
};

}  // namespace priorlane
