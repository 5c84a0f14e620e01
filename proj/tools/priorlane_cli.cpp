// priorlane command line: synth | train | eval | ablate | gradcheck | render.
// Exit codes: 0 ok, 1 usage/config, 2 data/format, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorlane/audit.hpp"
#include "priorlane/checkpoint.hpp"
#include "priorlane/config.hpp"
#include "priorlane/errors.hpp"
#include "priorlane/kernels.hpp"
#include "priorlane/metrics.hpp"
#include "priorlane/model.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/synth.hpp"
#include "priorlane/train.hpp"

namespace fs = std::filesystem;
using namespace priorlane;

namespace {

Dataset dataset_for(const ExperimentConfig& cfg, bool test_split) {
  const std::string& path = test_split ? cfg.test_path : cfg.train_path;
  if (!path.empty()) return read_dataset(path);
  return generate_dataset(recipe_from_config(cfg, test_split));
}

void print_synth_summary(const Dataset& ds) {
  std::vector<int64_t> histogram(size_t(ds.num_classes), 0);
  for (const LaneScene& s : ds.scenes)
    for (uint8_t v : s.label) ++histogram[v];
  std::cout << "scenes: " << ds.scenes.size() << "\n";
  std::cout << "image: " << ds.image_h << "x" << ds.image_w
            << "  classes: " << ds.num_classes
            << "  mode: " << (ds.mode == LabelMode::zjlab ? "zjlab" : "instance")
            << "\n";
  std::cout << "class pixel histogram:";
  for (size_t c = 0; c < histogram.size(); ++c)
    std::cout << " " << c << ":" << histogram[c];
  std::cout << "\n";
}

int cmd_synth(const std::string& recipe_path, const std::string& out_path,
              const std::string& map_out) {
  ExperimentConfig cfg = load_config(recipe_path);
  Dataset ds = generate_dataset(recipe_from_config(cfg, false));
  write_dataset(ds, out_path);
  print_synth_summary(ds);
  if (!map_out.empty()) {
    World world = generate_world(recipe_from_config(cfg, false),
                                 Rng::mix(cfg.data_seed, 0));
    save_grid_map(map_out, world.map);
    std::cout << "world map: " << map_out << "\n";
  }
  std::cout << "dataset: " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = load_config(config_path);
  fs::create_directories(out_dir);
  Dataset train_ds = dataset_for(cfg, false);
  Dataset test_ds = dataset_for(cfg, true);
  PriorLaneModel model(model_from_config(cfg, train_ds), cfg.seed);
  std::ofstream log(out_dir + "/train_log.jsonl");
  if (!log) throw IoError("train: cannot write log in '" + out_dir + "'");
  const std::string ckpt = out_dir + "/best.plck";
  TrainResult r = train_model(model, cfg, train_ds, test_ds, &log, ckpt);
  std::cout << "steps: " << r.steps << "  final loss: " << r.final_loss
            << "  best val mIoU: " << r.best_val_miou << "\n";
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& dataset_path, const std::string& protocol,
             const std::string& out_path) {
  ExperimentConfig cfg = load_config(config_path);
  Dataset ds = dataset_path.empty() ? dataset_for(cfg, true)
                                    : read_dataset(dataset_path);
  PriorLaneModel model(model_from_config(cfg, ds), cfg.seed);
  if (!ckpt_path.empty()) load_checkpoint(ckpt_path, model.params());
  EvalReport report = evaluate_model(model, ds, protocol);
  const std::string json = report.to_json();
  std::cout << json << "\n";
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw IoError("eval: cannot write '" + out_path + "'");
    os << json << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               const std::vector<int>& l1, const std::vector<int>& l2,
               const std::vector<double>& range,
               const std::vector<std::string>& variants,
               const std::vector<uint64_t>& seeds, int workers) {
  ExperimentConfig cfg = load_config(config_path);
  AblationSpec spec;
  spec.l1 = l1;
  spec.l2 = l2;
  spec.range = range;
  spec.variants = variants;
  if (!seeds.empty()) spec.seeds = seeds;
  fs::create_directories(out_dir);
  std::vector<AblationRow> rows = run_ablation(cfg, spec, workers, &std::cout);
  const std::string csv = ablation_csv(rows, spec.seeds);
  const std::string json = ablation_json(rows, spec.seeds);
  {
    std::ofstream os(out_dir + "/ablation.csv");
    os << csv;
  }
  {
    std::ofstream os(out_dir + "/ablation.json");
    os << json;
  }
  std::cout << csv;
  std::cout << "tables: " << out_dir << "/ablation.{csv,json}\n";
  return 0;
}

int cmd_gradcheck(const std::string& scope, double tolerance_override) {
  std::vector<GradCase> cases = gradcheck_scope(scope);
  int failures = 0;
  for (GradCase& c : cases) {
    const double tol =
        tolerance_override >= 0.0 ? tolerance_override : c.tolerance;
    const double err = c.run();
    const bool ok = err < tol;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << "  worst_rel_err="
              << err << "  tolerance=" << tol << "\n";
  }
  std::cout << (failures == 0 ? "gradcheck: all ops within tolerance"
                              : "gradcheck: " + std::to_string(failures) +
                                    " case(s) over tolerance")
            << "\n";
  return failures == 0 ? 0 : 3;
}

int cmd_render(const std::string& config_path, const std::string& ckpt_path,
               const std::string& dataset_path, const std::string& out_dir,
               int limit) {
  ExperimentConfig cfg = load_config(config_path);
  Dataset ds = dataset_path.empty() ? dataset_for(cfg, true)
                                    : read_dataset(dataset_path);
  PriorLaneModel model(model_from_config(cfg, ds), cfg.seed);
  if (!ckpt_path.empty()) load_checkpoint(ckpt_path, model.params());
  fs::create_directories(out_dir);
  const int count = limit > 0 ? std::min<int>(limit, int(ds.scenes.size()))
                              : int(ds.scenes.size());
  for (int i = 0; i < count; ++i) {
    const LaneScene& scene = ds.scenes[size_t(i)];
    std::vector<double> img(scene.image.begin(), scene.image.end());
    Tensor image = Tensor::from_data({3, scene.h, scene.w}, std::move(img));
    const LocalPrior* prior =
        (model.config().variant == Variant::priorlane_ke ||
         model.config().variant == Variant::priorlane_kea)
            ? &scene.prior
            : nullptr;
    SegOutput out = model.forward(image, prior);
    Tensor probs = model.class_probabilities(out);
    const auto& pv = probs.data();
    std::vector<uint8_t> pred(size_t(scene.h) * scene.w, 0);
    for (int64_t px = 0; px < int64_t(scene.h) * scene.w; ++px) {
      int best = 0;
      double bp = pv[size_t(px)];
      for (int c = 1; c < ds.num_classes; ++c)
        if (pv[size_t(c) * scene.h * scene.w + px] > bp) {
          bp = pv[size_t(c) * scene.h * scene.w + px];
          best = c;
        }
      pred[size_t(px)] = uint8_t(best);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%04d", i);
    write_ppm(out_dir + "/" + name + ".ppm",
              class_overlay(scene, pred), scene.h, scene.w);

    Tensor exist = sigmoid(out.existence);
    std::vector<double> exist_probs(exist.data().begin(), exist.data().end());
    std::vector<LanePolyline> lanes;
    if (ds.mode == LabelMode::instance)
      lanes = decode_lanes(probs.data(), ds.num_classes, scene.h, scene.w,
                           exist_probs);
    nlohmann::ordered_json j;
    j["sample"] = i;
    nlohmann::ordered_json jl = nlohmann::ordered_json::array();
    for (const LanePolyline& lane : lanes) {
      nlohmann::ordered_json pts = nlohmann::ordered_json::array();
      for (const auto& [x, y] : lane.points)
        pts.push_back({{"x", x}, {"y", y}});
      jl.push_back(pts);
    }
    j["lanes"] = jl;
    std::ofstream os(out_dir + "/" + name + ".lanes.json");
    os << j.dump(2) << "\n";
    write_lanes_txt(out_dir + "/" + name + ".lanes.txt", lanes);
  }
  std::cout << "rendered " << count << " sample(s) into " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PriorLane: prior-knowledge fused lane segmentation"};
  app.require_subcommand(1);

  std::string recipe_path, out_path = "dataset.plds", map_out;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--recipe", recipe_path, "recipe/config file")->required();
  synth->add_option("--out", out_path, "output dataset path");
  synth->add_option("--map-out", map_out, "also dump one world grid map (PLGM)");

  std::string train_config, train_out = "run";
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", train_config, "experiment config")->required();
  train->add_option("--out", train_out, "output directory");

  std::string eval_config, eval_ckpt, eval_dataset, eval_protocol = "miou",
                           eval_out;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", eval_config, "experiment config")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--dataset", eval_dataset, "dataset file (default: config)");
  eval->add_option("--protocol", eval_protocol, "miou | culane-f1 | tusimple");
  eval->add_option("--out", eval_out, "write the report JSON here");

  std::string abl_config, abl_out = "ablation";
  std::vector<int> abl_l1, abl_l2;
  std::vector<double> abl_range;
  std::vector<std::string> abl_variants;
  std::vector<uint64_t> abl_seeds;
  int abl_workers = 2;
  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation grid");
  ablate->add_option("--config", abl_config, "base experiment config")->required();
  ablate->add_option("--out", abl_out, "output directory");
  ablate->add_option("--l1", abl_l1, "knowledge encoder depths");
  ablate->add_option("--l2", abl_l2, "fusion encoder depths");
  ablate->add_option("--range", abl_range, "perception ranges (m)");
  ablate->add_option("--variant", abl_variants, "model variants");
  ablate->add_option("--seeds", abl_seeds, "random seeds (default 0 1 2)");
  ablate->add_option("--workers", abl_workers, "parallel cells");

  std::string gc_scope = "ops";
  double gc_tolerance = -1.0;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit");
  gradcheck->add_option("--scope", gc_scope, "ops | kea | fusion | full");
  gradcheck->add_option("--tolerance", gc_tolerance,
                        "override per-case tolerances");

  std::string rnd_config, rnd_ckpt, rnd_dataset, rnd_out = "render";
  int rnd_limit = 0;
  CLI::App* render = app.add_subcommand("render", "write prediction overlays");
  render->add_option("--config", rnd_config, "experiment config")->required();
  render->add_option("--checkpoint", rnd_ckpt, "checkpoint file");
  render->add_option("--dataset", rnd_dataset, "dataset file (default: config)");
  render->add_option("--out", rnd_out, "output directory");
  render->add_option("--limit", rnd_limit, "max samples (0 = all)");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(recipe_path, out_path, map_out);
    if (train->parsed()) return cmd_train(train_config, train_out);
    if (eval->parsed())
      return cmd_eval(eval_config, eval_ckpt, eval_dataset, eval_protocol,
                      eval_out);
    if (ablate->parsed())
      return cmd_ablate(abl_config, abl_out, abl_l1, abl_l2, abl_range,
                        abl_variants, abl_seeds, abl_workers);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_scope, gc_tolerance);
    if (render->parsed())
      return cmd_render(rnd_config, rnd_ckpt, rnd_dataset, rnd_out, rnd_limit);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
