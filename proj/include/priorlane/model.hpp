#pragma once

// Full segmentation model: backbone features, optional prior-knowledge
// fusion (variant-dependent), MLP decode head merging all stage features
// with the fused feature, per-pixel class logits plus a per-lane existence
// branch. The MiT-Lane baseline is this model with the fusion pathway
// zeroed, not a separate network.

#include <array>
#include <string>
#include <vector>

#include "priorlane/backbone.hpp"
#include "priorlane/grid_map.hpp"
#include "priorlane/kea.hpp"
#include "priorlane/knowledge.hpp"
#include "priorlane/params.hpp"
#include "priorlane/transformer.hpp"

namespace priorlane {

enum class Variant { mit_lane, priorlane_imp, priorlane_ke, priorlane_kea };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::priorlane_kea;
  int image_h = 64, image_w = 128;
  int num_classes = 4;  // background, white line, yellow line, stop line
  int max_lanes = 4;
  int patch = 10;        // P
  int embed_dim = 64;    // E_p, also the fusion model dim
  int prior_size = 200;  // S
  int prior_channels = 1;
  int l1 = 4, l2 = 4;
  int fusion_heads = 8;
  int fusion_ffn_mult = 4;
  int arf_orientations = 4;
  int arf_kernel = 3;
  int decode_dim = 64;
  double exist_loss_weight = 0.1;
  double lane_class_weight = 3.0;  // CE weight for non-background classes
  BackboneConfig backbone;

  int token_grid() const { return prior_size / patch; }
  int prior_tokens() const { return token_grid() * token_grid(); }
  void validate() const;
};

struct SegOutput {
  Tensor logits;     // [num_classes, H/4, W/4]
  Tensor existence;  // [max_lanes]
};

class PriorLaneModel {
 public:
  PriorLaneModel(const ModelConfig& cfg, uint64_t seed);

  // prior may be null for mit-lane and priorlane-imp.
  SegOutput forward(const Tensor& image, const LocalPrior* prior,
                    bool zero_fusion = false) const;

  // Pixel cross-entropy on H x W labels plus weighted existence BCE.
  Tensor loss(const SegOutput& out, const std::vector<uint8_t>& labels,
              const std::vector<uint8_t>& existence) const;

  // Class probabilities at image resolution: [num_classes, H, W].
  Tensor class_probabilities(const SegOutput& out) const;

  ParamMap& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  Tensor fused_feature(const std::array<Tensor, 4>& feats,
                       const LocalPrior* prior) const;

  ModelConfig cfg_;
  Backbone backbone_;
  std::array<LinearLayer, 4> stage_proj_;
  LinearLayer decode_fuse_, classifier_, exist_head_;
  // fusion pathway (absent for mit-lane)
  LinearLayer img_proj_;
  Tensor prior_projection_;  // [(P*P*C) x E_p] for ke/kea
  Tensor learned_prior_;     // [L x E_p] for imp
  KeaModule kea_;            // kea/imp
  FusionTransformer fusion_;
  LinearLayer fused_proj_;
  ParamMap params_;
};

}  // namespace priorlane
