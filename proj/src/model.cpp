#include "priorlane/model.hpp"

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"

namespace priorlane {

Variant variant_from_string(const std::string& s) {
  if (s == "mit-lane") return Variant::mit_lane;
  if (s == "priorlane-imp") return Variant::priorlane_imp;
  if (s == "priorlane-ke") return Variant::priorlane_ke;
  if (s == "priorlane-kea") return Variant::priorlane_kea;
  throw ConfigError("unknown model variant '" + s + "'");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::mit_lane: return "mit-lane";
    case Variant::priorlane_imp: return "priorlane-imp";
    case Variant::priorlane_ke: return "priorlane-ke";
    case Variant::priorlane_kea: return "priorlane-kea";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (image_h % 32 != 0 || image_w % 32 != 0)
    throw ConfigError("model: image extent " + std::to_string(image_h) + "x" +
                      std::to_string(image_w) + " must be divisible by 32");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (max_lanes < 1) throw ConfigError("model: max_lanes must be >= 1");
  if (patch < 1 || prior_size % patch != 0)
    throw ConfigError("model: patch " + std::to_string(patch) +
                      " does not divide prior size " +
                      std::to_string(prior_size));
  if (embed_dim % fusion_heads != 0)
    throw ConfigError("model: fusion heads must divide the embed dim");
  if (l1 < 0 || l2 < 0) throw ConfigError("model: encoder depths must be >= 0");
  if (token_grid() % 4 != 0)
    throw ConfigError("model: token grid must be divisible by 4 for the "
                      "localization head");
  backbone.validate();
}

PriorLaneModel::PriorLaneModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  // Shared trunk first so identical seeds give identical trunk weights
  // across variants.
  backbone_ = Backbone(cfg_.backbone, rng);
  const int dd = cfg_.decode_dim;
  for (int s = 0; s < 4; ++s)
    stage_proj_[size_t(s)] =
        LinearLayer(cfg_.backbone.stages[size_t(s)].channels, dd, rng);
  decode_fuse_ = LinearLayer(5 * dd, dd, rng);
  classifier_ = LinearLayer(dd, cfg_.num_classes, rng);
  exist_head_ = LinearLayer(dd, cfg_.max_lanes, rng);

  if (cfg_.variant != Variant::mit_lane) {
    img_proj_ = LinearLayer(cfg_.backbone.stages[3].channels, cfg_.embed_dim,
                            rng);
    if (cfg_.variant == Variant::priorlane_imp) {
      learned_prior_ = init_normal({cfg_.prior_tokens(), cfg_.embed_dim}, 0.02,
                                   rng);
    } else {
      const int pvec = cfg_.patch * cfg_.patch * cfg_.prior_channels;
      prior_projection_ = init_xavier({pvec, cfg_.embed_dim}, pvec,
                                      cfg_.embed_dim, rng);
    }
    if (cfg_.variant == Variant::priorlane_kea ||
        cfg_.variant == Variant::priorlane_imp)
      kea_ = KeaModule(cfg_.embed_dim, cfg_.token_grid(),
                       cfg_.arf_orientations, cfg_.arf_kernel, rng);
    fusion_ = FusionTransformer(cfg_.embed_dim, cfg_.fusion_heads,
                                cfg_.embed_dim * cfg_.fusion_ffn_mult, cfg_.l1,
                                cfg_.l2, rng);
    fused_proj_ = LinearLayer(cfg_.embed_dim, dd, rng);
  }

  backbone_.collect_params("backbone", params_);
  for (int s = 0; s < 4; ++s)
    stage_proj_[size_t(s)].collect_params(
        "decode.proj" + std::to_string(s + 1), params_);
  decode_fuse_.collect_params("decode.fuse", params_);
  classifier_.collect_params("decode.classifier", params_);
  exist_head_.collect_params("decode.exist", params_);
  if (cfg_.variant != Variant::mit_lane) {
    img_proj_.collect_params("fusion.imgproj", params_);
    if (cfg_.variant == Variant::priorlane_imp)
      params_.add("prior.learned", learned_prior_);
    else
      params_.add("prior.projection", prior_projection_);
    if (cfg_.variant == Variant::priorlane_kea ||
        cfg_.variant == Variant::priorlane_imp)
      kea_.collect_params("kea", params_);
    fusion_.collect_params("fusion", params_);
    fused_proj_.collect_params("fusion.outproj", params_);
  }
}

Tensor PriorLaneModel::fused_feature(const std::array<Tensor, 4>& feats,
                                     const LocalPrior* prior) const {
  const int h32 = cfg_.image_h / 32, w32 = cfg_.image_w / 32;
  Tensor img_tokens = img_proj_.forward(map_to_tokens(feats[3]));
  Tensor prior_tokens;
  switch (cfg_.variant) {
    case Variant::priorlane_imp:
      prior_tokens = kea_.forward(learned_prior_);
      break;
    case Variant::priorlane_ke:
    case Variant::priorlane_kea: {
      if (!prior)
        throw ConfigError("model: variant " + variant_to_string(cfg_.variant) +
                          " needs a local prior");
      if (prior->s != cfg_.prior_size || prior->c != cfg_.prior_channels)
        throw ConfigError("model: prior " + std::to_string(prior->s) + "x" +
                          std::to_string(prior->s) + "x" +
                          std::to_string(prior->c) + " does not match config");
      Tensor tokens =
          embed_knowledge(*prior, prior_projection_, cfg_.patch).tokens;
      prior_tokens = cfg_.variant == Variant::priorlane_kea
                         ? kea_.forward(tokens)
                         : tokens;
      break;
    }
    case Variant::mit_lane:
      throw ConfigError("model: no fusion pathway in mit-lane");
  }
  Tensor fused = fusion_.fuse(img_tokens, prior_tokens);  // [h32*w32, d]
  Tensor fmap = tokens_to_map(fused_proj_.forward(fused), h32, w32);
  return upsample_bilinear(fmap, cfg_.image_h / 4, cfg_.image_w / 4);
}

SegOutput PriorLaneModel::forward(const Tensor& image, const LocalPrior* prior,
                                  bool zero_fusion) const {
  if (image.dim(1) != cfg_.image_h || image.dim(2) != cfg_.image_w)
    throw ShapeError("model: image " + shape_str(image.shape()) +
                     " does not match configured " +
                     std::to_string(cfg_.image_h) + "x" +
                     std::to_string(cfg_.image_w));
  const std::array<Tensor, 4> feats = backbone_.forward(image);
  const int h4 = cfg_.image_h / 4, w4 = cfg_.image_w / 4;

  std::vector<Tensor> maps;
  maps.reserve(5);
  int h = h4, w = w4;
  for (int s = 0; s < 4; ++s) {
    Tensor proj = stage_proj_[size_t(s)].forward(map_to_tokens(feats[size_t(s)]));
    Tensor map = tokens_to_map(proj, h, w);
    maps.push_back(s == 0 ? map : upsample_bilinear(map, h4, w4));
    h /= 2;
    w /= 2;
  }
  maps.push_back(cfg_.variant == Variant::mit_lane || zero_fusion
                     ? Tensor::zeros({cfg_.decode_dim, h4, w4})
                     : fused_feature(feats, prior));

  Tensor merged = map_to_tokens(concat(maps, 0));          // [h4*w4, 5*dd]
  Tensor pre = gelu(decode_fuse_.forward(merged));          // [h4*w4, dd]
  SegOutput out;
  out.logits = tokens_to_map(classifier_.forward(pre), h4, w4);
  Tensor pooled = reshape(spatial_mean(tokens_to_map(pre, h4, w4)),
                          {1, cfg_.decode_dim});
  out.existence = reshape(exist_head_.forward(pooled), {cfg_.max_lanes});
  return out;
}

Tensor PriorLaneModel::loss(const SegOutput& out,
                            const std::vector<uint8_t>& labels,
                            const std::vector<uint8_t>& existence) const {
  const int h = cfg_.image_h, w = cfg_.image_w;
  if (int64_t(labels.size()) != int64_t(h) * w)
    throw ShapeError("loss: label mask has " + std::to_string(labels.size()) +
                     " entries, expected " + std::to_string(int64_t(h) * w));
  if (int(existence.size()) != cfg_.max_lanes)
    throw ShapeError("loss: existence flags " +
                     std::to_string(existence.size()) + " vs max_lanes " +
                     std::to_string(cfg_.max_lanes));
  Tensor up = upsample_bilinear(out.logits, h, w);
  std::vector<int> idx(labels.begin(), labels.end());
  std::vector<double> class_w(size_t(cfg_.num_classes), cfg_.lane_class_weight);
  class_w[0] = 1.0;
  Tensor ce = cross_entropy_weighted(map_to_tokens(up), idx, class_w);
  std::vector<double> targets(existence.begin(), existence.end());
  Tensor bce = bce_with_logits(out.existence, targets);
  return add(ce, scale(bce, cfg_.exist_loss_weight));
}

Tensor PriorLaneModel::class_probabilities(const SegOutput& out) const {
  Tensor up = upsample_bilinear(out.logits, cfg_.image_h, cfg_.image_w);
  return softmax(up, 0);
}

}  // namespace priorlane
