#include "priorlane/audit.hpp"

#include "priorlane/errors.hpp"
#include "priorlane/kea.hpp"
#include "priorlane/model.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/rng.hpp"
#include "priorlane/synth.hpp"
#include "priorlane/transformer.hpp"

namespace priorlane {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> data(size_t(shape_numel(s)));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(s), std::move(data));
}

Tensor weighted_sum(const Tensor& y, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(size_t(y.numel()));
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor::from_data(y.shape(), std::move(w))));
}

}  // namespace

std::vector<GradCase> kea_gradcheck_cases() {
  std::vector<GradCase> cases;

  cases.push_back({"kea.orpool_arf", 1e-4, [] {
                     Rng rng(70);
                     ArfLayer layer(4, 3, rng);
                     std::vector<Tensor> in = {random_tensor({4, 6, 6}, rng),
                                               layer.canonical()};
                     auto f = [&layer](std::vector<Tensor>& t) {
                       return weighted_sum(or_pool(layer.forward(t[0])), 700);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(
      {"kea.localize_path", 1e-4, [] {
         Rng rng(71);
         KeaModule kea(8, 8, 4, 3, rng);
         ParamMap params;
         kea.collect_params("kea", params);
         std::vector<Tensor> in;
         in.push_back(random_tensor({64, 8}, rng));
         for (auto& [name, t] : params.items) in.push_back(t);
         auto f = [&kea](std::vector<Tensor>& t) {
           return weighted_sum(kea.localize(t[0]), 701);
         };
         GradCheckOptions opts;
         opts.max_elements_per_input = 48;
         return gradcheck_fn(f, in, opts);
       }});

  cases.push_back({"kea.align", 1e-4, [] {
                     Rng rng(72);
                     // near-identity transform with generic coefficients:
                     // bilinear sampling is not differentiable exactly on the
                     // pixel lattice, so keep every sample point off it
                     std::vector<Tensor> in = {
                         random_tensor({36, 5}, rng),
                         Tensor::from_data({1, 6}, {0.937, 0.0553, 0.0412,
                                                    -0.0471, 1.0132, -0.0293})};
                     auto f = [](std::vector<Tensor>& t) {
                       return weighted_sum(align_tokens(t[0], t[1], 6), 702);
                     };
                     return gradcheck_fn(f, in);
                   }});

  cases.push_back(
      {"kea.full_module", 1e-4, [] {
         Rng rng(73);
         KeaModule kea(8, 8, 4, 3, rng);
         ParamMap params;
         kea.collect_params("kea", params);
         // a fresh module regresses the exact identity transform, which puts
         // every sample point on a lattice kink; jitter off it first
         Rng jitter(37);
         for (auto& [name, t] : params.items)
           for (double& v : t.data()) v += jitter.uniform(-0.05, 0.05);
         std::vector<Tensor> in;
         in.push_back(random_tensor({64, 8}, rng));
         for (auto& [name, t] : params.items) in.push_back(t);
         auto f = [&kea](std::vector<Tensor>& t) {
           return weighted_sum(kea.forward(t[0]), 703);
         };
         GradCheckOptions opts;
         opts.max_elements_per_input = 24;
         return gradcheck_fn(f, in, opts);
       }});

  return cases;
}

std::vector<GradCase> fusion_gradcheck_cases() {
  std::vector<GradCase> cases;

  cases.push_back(
      {"fusion.encoder_layer_x2", 1e-4, [] {
         Rng rng(80);
         EncoderLayer l1(8, 2, 16, rng), l2(8, 2, 16, rng);
         ParamMap params;
         l1.collect_params("l1", params);
         l2.collect_params("l2", params);
         std::vector<Tensor> in;
         in.push_back(random_tensor({5, 8}, rng));
         for (auto& [name, t] : params.items) in.push_back(t);
         auto f = [&](std::vector<Tensor>& t) {
           return weighted_sum(l2.forward(l1.forward(t[0])), 800);
         };
         GradCheckOptions opts;
         opts.max_elements_per_input = 16;
         return gradcheck_fn(f, in, opts);
       }});

  cases.push_back(
      {"fusion.fuse", 1e-4, [] {
         Rng rng(81);
         FusionTransformer ft(8, 2, 16, 1, 1, rng);
         ParamMap params;
         ft.collect_params("ft", params);
         std::vector<Tensor> in;
         in.push_back(random_tensor({4, 8}, rng));   // image tokens
         in.push_back(random_tensor({6, 8}, rng));   // prior tokens
         for (auto& [name, t] : params.items) in.push_back(t);
         auto f = [&](std::vector<Tensor>& t) {
           return weighted_sum(ft.fuse(t[0], t[1]), 801);
         };
         GradCheckOptions opts;
         opts.max_elements_per_input = 16;
         return gradcheck_fn(f, in, opts);
       }});

  return cases;
}

std::vector<GradCase> full_model_gradcheck_cases() {
  std::vector<GradCase> cases;
  cases.push_back(
      {"full.priorlane_kea_graph", 1e-4, [] {
         // smallest legal composition: 32x64 image, 20x20 token grid
         SceneRecipe recipe;
         recipe.seed = 99;
         recipe.scene_count = 1;
         recipe.image_h = 32;
         recipe.image_w = 64;
         Dataset ds = generate_dataset(recipe);
         const LaneScene& scene = ds.scenes[0];

         ModelConfig mc;
         mc.variant = Variant::priorlane_kea;
         mc.image_h = 32;
         mc.image_w = 64;
         mc.num_classes = 4;
         mc.max_lanes = recipe.max_lanes;
         mc.l1 = 1;
         mc.l2 = 1;
         PriorLaneModel model(mc, 7);
         // move weights off their identity/zero initialization so every
         // pathway carries signal
         Rng jitter(17);
         for (auto& [name, t] : model.params().items)
           for (double& v : t.data()) v += jitter.uniform(-0.05, 0.05);

         std::vector<double> img(scene.image.begin(), scene.image.end());
         Tensor image = Tensor::from_data({3, 32, 64}, std::move(img));

         std::vector<Tensor> in;
         in.push_back(image);
         for (auto& [name, t] : model.params().items) in.push_back(t);
         const LocalPrior* prior = &scene.prior;
         auto f = [&model, prior, &scene](std::vector<Tensor>& t) {
           SegOutput out = model.forward(t[0], prior);
           return model.loss(out, scene.label, scene.existence);
         };
         GradCheckOptions opts;
         opts.max_elements_per_input = 3;
         opts.sample_seed = 5;
         return gradcheck_fn(f, in, opts);
       }});
  return cases;
}

std::vector<GradCase> gradcheck_scope(const std::string& scope) {
  std::vector<GradCase> cases;
  auto extend = [&cases](std::vector<GradCase> more) {
    for (auto& c : more) cases.push_back(std::move(c));
  };
  if (scope == "ops") {
    extend(op_gradcheck_cases());
  } else if (scope == "kea") {
    extend(kea_gradcheck_cases());
  } else if (scope == "fusion") {
    extend(fusion_gradcheck_cases());
  } else if (scope == "full") {
    extend(op_gradcheck_cases());
    extend(kea_gradcheck_cases());
    extend(fusion_gradcheck_cases());
    extend(full_model_gradcheck_cases());
  } else {
    throw UsageError("gradcheck: scope must be ops, kea, fusion or full");
  }
  return cases;
}

}  // namespace priorlane
