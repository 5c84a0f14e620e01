#pragma once

// Miniature hierarchical mixed-transformer encoder: four stages of
// overlapped patch merging followed by transformer blocks whose attention
// reduces keys/values spatially (pool + linear) to bound cost. Strides
// multiply to 32, so stage s sits at 1/4, 1/8, 1/16, 1/32 resolution.

#include <array>
#include <vector>

#include "priorlane/params.hpp"
#include "priorlane/tensor.hpp"
#include "priorlane/transformer.hpp"

namespace priorlane {

struct StageConfig {
  int channels;
  int depth;
  int merge_kernel;
  int merge_stride;
  int sr_ratio;  // spatial reduction on keys/values
  int heads;
};

struct BackboneConfig {
  std::array<StageConfig, 4> stages{{{16, 1, 7, 4, 8, 1},
                                     {32, 1, 3, 2, 4, 2},
                                     {64, 1, 3, 2, 2, 4},
                                     {128, 1, 3, 2, 1, 8}}};
  int ffn_mult = 4;

  void validate() const;  // strides must multiply to 32
};

// One transformer block operating on tokens of a (h x w) map, with
// spatially reduced keys/values when sr_ratio > 1.
class SraBlock {
 public:
  SraBlock() = default;
  SraBlock(int dim, int heads, int ffn_dim, int sr_ratio, Rng& rng);
  Tensor forward(const Tensor& tokens, int h, int w) const;
  void collect_params(const std::string& prefix, ParamMap& out);

 private:
  int dim_ = 0, sr_ratio_ = 1;
  LayerNormModule ln1_, ln2_, ln_kv_;
  SelfAttention attn_;
  LinearLayer kv_proj_;
  LinearLayer ffn1_, ffn2_;
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng);

  // image [3,H,W], H and W divisible by 32 -> four maps [C_s, H/4..H/32, *].
  std::array<Tensor, 4> forward(const Tensor& image) const;
  void collect_params(const std::string& prefix, ParamMap& out);
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  struct Stage {
    Tensor merge_w, merge_b;
    LayerNormModule ln_in, ln_out;
    std::vector<SraBlock> blocks;
  };
  std::array<Stage, 4> stages_;
};

// Tokens [h*w, c] <-> map [c, h, w]
Tensor map_to_tokens(const Tensor& map);
Tensor tokens_to_map(const Tensor& tokens, int h, int w);

}  // namespace priorlane
