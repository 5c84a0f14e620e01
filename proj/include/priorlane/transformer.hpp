#pragma once

// Encoder machinery shared by the fusion transformer and the backbone:
// multi-head self-attention (scaled dot-product, no positional encoding
// anywhere), pre-norm residual blocks with zero-initialized output
// projections, and the knowledge/fusion encoder stacks.

#include <vector>

#include "priorlane/params.hpp"
#include "priorlane/tensor.hpp"

namespace priorlane {

struct LinearLayer {
  Tensor w, b;
  LinearLayer() = default;
  LinearLayer(int in, int out, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamMap& out);
};

struct LayerNormModule {
  Tensor gamma, beta;
  LayerNormModule() = default;
  explicit LayerNormModule(int dim);
  Tensor forward(const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamMap& out);
};

// Multi-head attention over a token sequence [n, d]. Keys/values may come
// from a different (e.g. spatially reduced) sequence.
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(int dim, int heads, Rng& rng);
  Tensor forward(const Tensor& x) const { return forward(x, x); }
  Tensor forward(const Tensor& queries, const Tensor& keys_values) const;
  void collect_params(const std::string& prefix, ParamMap& out);
  int heads() const { return heads_; }

 private:
  int dim_ = 0, heads_ = 0;
  LinearLayer wq_, wk_, wv_, wo_;
};

// Pre-norm block: x + attn(norm(x)); then x + ffn(norm(x)) with GELU.
// Output projections start at zero, so a fresh layer is the identity.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(int dim, int heads, int ffn_dim, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect_params(const std::string& prefix, ParamMap& out);

 private:
  LayerNormModule ln1_, ln2_;
  SelfAttention attn_;
  LinearLayer ffn1_, ffn2_;
};

// L1 knowledge encoder layers refine the prior tokens; the concatenation
// [img; prior] passes through L2 fusion encoder layers; only the image
// segment comes back.
class FusionTransformer {
 public:
  FusionTransformer() = default;
  FusionTransformer(int dim, int heads, int ffn_dim, int knowledge_layers,
                    int fusion_layers, Rng& rng);
  Tensor fuse(const Tensor& img_tokens, const Tensor& prior_tokens) const;
  void collect_params(const std::string& prefix, ParamMap& out);

 private:
  std::vector<EncoderLayer> knowledge_;
  std::vector<EncoderLayer> fusion_;
};

}  // namespace priorlane
