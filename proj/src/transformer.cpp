#include "priorlane/transformer.hpp"

#include <cmath>

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"

namespace priorlane {

LinearLayer::LinearLayer(int in, int out, Rng& rng, bool zero_init) {
  w = zero_init ? Tensor::zeros({in, out}, true)
                : init_xavier({in, out}, in, out, rng);
  b = Tensor::zeros({out}, true);
}

Tensor LinearLayer::forward(const Tensor& x) const { return linear(x, w, b); }

void LinearLayer::collect_params(const std::string& prefix, ParamMap& out) {
  out.add(prefix + ".w", w);
  out.add(prefix + ".b", b);
}

LayerNormModule::LayerNormModule(int dim)
    : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)) {}

Tensor LayerNormModule::forward(const Tensor& x) const {
  return layer_norm(x, gamma, beta);
}

void LayerNormModule::collect_params(const std::string& prefix, ParamMap& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

SelfAttention::SelfAttention(int dim, int heads, Rng& rng)
    : dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("attention: head count " + std::to_string(heads) +
                      " must divide model dim " + std::to_string(dim));
  wq_ = LinearLayer(dim, dim, rng);
  wk_ = LinearLayer(dim, dim, rng);
  wv_ = LinearLayer(dim, dim, rng);
  wo_ = LinearLayer(dim, dim, rng, /*zero_init=*/true);
}

Tensor SelfAttention::forward(const Tensor& queries,
                              const Tensor& keys_values) const {
  if (queries.rank() != 2 || queries.dim(1) != dim_)
    throw ShapeError("attention: queries " + shape_str(queries.shape()) +
                     " vs model dim " + std::to_string(dim_));
  const int dk = dim_ / heads_;
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(dk));
  Tensor q = wq_.forward(queries);
  Tensor k = wk_.forward(keys_values);
  Tensor v = wv_.forward(keys_values);
  std::vector<Tensor> heads_out;
  heads_out.reserve(size_t(heads_));
  for (int h = 0; h < heads_; ++h) {
    Tensor qh = slice(q, 1, h * dk, dk);
    Tensor kh = slice(k, 1, h * dk, dk);
    Tensor vh = slice(v, 1, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt_dk);
    heads_out.push_back(matmul(softmax(scores, 1), vh));
  }
  return wo_.forward(concat(heads_out, 1));
}

void SelfAttention::collect_params(const std::string& prefix, ParamMap& out) {
  wq_.collect_params(prefix + ".wq", out);
  wk_.collect_params(prefix + ".wk", out);
  wv_.collect_params(prefix + ".wv", out);
  wo_.collect_params(prefix + ".wo", out);
}

EncoderLayer::EncoderLayer(int dim, int heads, int ffn_dim, Rng& rng)
    : ln1_(dim),
      ln2_(dim),
      attn_(dim, heads, rng),
      ffn1_(dim, ffn_dim, rng),
      ffn2_(ffn_dim, dim, rng, /*zero_init=*/true) {}

Tensor EncoderLayer::forward(const Tensor& x) const {
  Tensor a = add(x, attn_.forward(ln1_.forward(x)));
  return add(a, ffn2_.forward(gelu(ffn1_.forward(ln2_.forward(a)))));
}

void EncoderLayer::collect_params(const std::string& prefix, ParamMap& out) {
  ln1_.collect_params(prefix + ".ln1", out);
  attn_.collect_params(prefix + ".attn", out);
  ln2_.collect_params(prefix + ".ln2", out);
  ffn1_.collect_params(prefix + ".ffn1", out);
  ffn2_.collect_params(prefix + ".ffn2", out);
}

FusionTransformer::FusionTransformer(int dim, int heads, int ffn_dim,
                                     int knowledge_layers, int fusion_layers,
                                     Rng& rng) {
  knowledge_.reserve(size_t(knowledge_layers));
  for (int i = 0; i < knowledge_layers; ++i)
    knowledge_.emplace_back(dim, heads, ffn_dim, rng);
  fusion_.reserve(size_t(fusion_layers));
  for (int i = 0; i < fusion_layers; ++i)
    fusion_.emplace_back(dim, heads, ffn_dim, rng);
}

Tensor FusionTransformer::fuse(const Tensor& img_tokens,
                               const Tensor& prior_tokens) const {
  if (img_tokens.dim(1) != prior_tokens.dim(1))
    throw ConfigError("fuse: image tokens " + shape_str(img_tokens.shape()) +
                      " and prior tokens " + shape_str(prior_tokens.shape()) +
                      " must share one model dim");
  Tensor p = prior_tokens;
  for (const EncoderLayer& l : knowledge_) p = l.forward(p);
  Tensor q = concat({img_tokens, p}, 0);
  for (const EncoderLayer& l : fusion_) q = l.forward(q);
  return slice(q, 0, 0, img_tokens.dim(0));
}

void FusionTransformer::collect_params(const std::string& prefix,
                                       ParamMap& out) {
  for (size_t i = 0; i < knowledge_.size(); ++i)
    knowledge_[i].collect_params(prefix + ".knowledge" + std::to_string(i),
                                 out);
  for (size_t i = 0; i < fusion_.size(); ++i)
    fusion_[i].collect_params(prefix + ".fusion" + std::to_string(i), out);
}

}  // namespace priorlane
