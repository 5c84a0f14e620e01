#include "priorlane/backbone.hpp"

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"

namespace priorlane {

void BackboneConfig::validate() const {
  int total = 1;
  for (const StageConfig& s : stages) {
    if (s.channels < 1 || s.depth < 0 || s.merge_stride < 1 || s.heads < 1 ||
        s.sr_ratio < 1)
      throw ConfigError("backbone: invalid stage configuration");
    if (s.channels % s.heads != 0)
      throw ConfigError("backbone: heads must divide stage channels");
    total *= s.merge_stride;
  }
  if (total != 32)
    throw ConfigError("backbone: stage strides must multiply to 32, got " +
                      std::to_string(total));
}

Tensor map_to_tokens(const Tensor& map) {
  const int c = map.dim(0), h = map.dim(1), w = map.dim(2);
  return transpose2d(reshape(map, {c, h * w}));
}

Tensor tokens_to_map(const Tensor& tokens, int h, int w) {
  const int c = tokens.dim(1);
  return reshape(transpose2d(tokens), {c, h, w});
}

SraBlock::SraBlock(int dim, int heads, int ffn_dim, int sr_ratio, Rng& rng)
    : dim_(dim),
      sr_ratio_(sr_ratio),
      ln1_(dim),
      ln2_(dim),
      ln_kv_(dim),
      attn_(dim, heads, rng),
      kv_proj_(dim, dim, rng),
      ffn1_(dim, ffn_dim, rng),
      ffn2_(ffn_dim, dim, rng, /*zero_init=*/true) {}

Tensor SraBlock::forward(const Tensor& tokens, int h, int w) const {
  Tensor normed = ln1_.forward(tokens);
  Tensor kv = normed;
  if (sr_ratio_ > 1) {
    if (h % sr_ratio_ != 0 || w % sr_ratio_ != 0)
      throw ShapeError("SraBlock: map " + std::to_string(h) + "x" +
                       std::to_string(w) + " not divisible by reduction " +
                       std::to_string(sr_ratio_));
    Tensor reduced =
        avg_pool2d(tokens_to_map(normed, h, w), sr_ratio_, sr_ratio_);
    kv = ln_kv_.forward(kv_proj_.forward(map_to_tokens(reduced)));
  }
  Tensor a = add(tokens, attn_.forward(normed, kv));
  return add(a, ffn2_.forward(gelu(ffn1_.forward(ln2_.forward(a)))));
}

void SraBlock::collect_params(const std::string& prefix, ParamMap& out) {
  ln1_.collect_params(prefix + ".ln1", out);
  attn_.collect_params(prefix + ".attn", out);
  if (sr_ratio_ > 1) {
    kv_proj_.collect_params(prefix + ".kv", out);
    ln_kv_.collect_params(prefix + ".lnkv", out);
  }
  ln2_.collect_params(prefix + ".ln2", out);
  ffn1_.collect_params(prefix + ".ffn1", out);
  ffn2_.collect_params(prefix + ".ffn2", out);
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in_channels = 3;
  for (int s = 0; s < 4; ++s) {
    const StageConfig& sc = cfg_.stages[size_t(s)];
    Stage& st = stages_[size_t(s)];
    const int fan_in = in_channels * sc.merge_kernel * sc.merge_kernel;
    st.merge_w = init_xavier({sc.channels, in_channels, sc.merge_kernel,
                              sc.merge_kernel},
                             fan_in, sc.channels, rng);
    st.merge_b = Tensor::zeros({sc.channels}, true);
    st.ln_in = LayerNormModule(sc.channels);
    st.ln_out = LayerNormModule(sc.channels);
    st.blocks.reserve(size_t(sc.depth));
    for (int d = 0; d < sc.depth; ++d)
      st.blocks.emplace_back(sc.channels, sc.heads, sc.channels * cfg_.ffn_mult,
                             sc.sr_ratio, rng);
    in_channels = sc.channels;
  }
}

std::array<Tensor, 4> Backbone::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("backbone: expected [3,H,W], got " +
                     shape_str(image.shape()));
  if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
    throw ShapeError("backbone: input " + shape_str(image.shape()) +
                     " must be divisible by 32");
  std::array<Tensor, 4> feats;
  Tensor x = image;
  int h = image.dim(1), w = image.dim(2);
  for (int s = 0; s < 4; ++s) {
    const StageConfig& sc = cfg_.stages[size_t(s)];
    const Stage& st = stages_[size_t(s)];
    Tensor merged = add_channel_bias(
        overlap_patch_merge(x, st.merge_w, sc.merge_stride), st.merge_b);
    h /= sc.merge_stride;
    w /= sc.merge_stride;
    Tensor tokens = st.ln_in.forward(map_to_tokens(merged));
    for (const SraBlock& b : st.blocks) tokens = b.forward(tokens, h, w);
    tokens = st.ln_out.forward(tokens);
    x = tokens_to_map(tokens, h, w);
    feats[size_t(s)] = x;
  }
  return feats;
}

void Backbone::collect_params(const std::string& prefix, ParamMap& out) {
  for (int s = 0; s < 4; ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    Stage& st = stages_[size_t(s)];
    out.add(sp + ".merge.w", st.merge_w);
    out.add(sp + ".merge.b", st.merge_b);
    st.ln_in.collect_params(sp + ".lnin", out);
    for (size_t b = 0; b < st.blocks.size(); ++b)
      st.blocks[b].collect_params(sp + ".block" + std::to_string(b), out);
    st.ln_out.collect_params(sp + ".lnout", out);
  }
}

}  // namespace priorlane
