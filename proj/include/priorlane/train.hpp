#pragma once

// Experiment drivers shared by the CLI and the acceptance suite: seeded
// training with JSON-lines logging, protocol evaluation, the ablation grid
// runner, and overlay rendering.

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "priorlane/config.hpp"
#include "priorlane/metrics.hpp"
#include "priorlane/model.hpp"
#include "priorlane/synth.hpp"

namespace priorlane {

struct TrainResult {
  double final_loss = 0.0;
  double best_val_miou = 0.0;
  int steps = 0;
};

// Trains in place. log (optional) receives one JSON object per epoch;
// checkpoint_path (optional) receives the best-validation parameters.
TrainResult train_model(PriorLaneModel& model, const ExperimentConfig& cfg,
                        const Dataset& train_ds, const Dataset& val_ds,
                        std::ostream* log,
                        const std::string& checkpoint_path = "");

EvalReport evaluate_model(const PriorLaneModel& model, const Dataset& ds,
                          const std::string& protocol);

// Ground-truth lane polylines recovered from an instance-mode label mask.
std::vector<LanePolyline> gt_lanes_from_labels(const LaneScene& scene,
                                               int max_lanes);

struct AblationSpec {
  std::vector<int> l1, l2;             // empty = keep base value
  std::vector<double> range;
  std::vector<std::string> variants;
  std::vector<uint64_t> seeds = {0, 1, 2};
};

struct AblationRow {
  std::string variant;
  int l1 = 0, l2 = 0;
  double range = 0.0;
  std::vector<double> per_seed_miou;
  double mean_miou = 0.0;
  bool skipped = false;
  std::string note;
};

// Trains and evaluates every grid cell (cells run on `workers` threads; the
// table order never depends on scheduling).
std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const AblationSpec& spec, int workers,
                                      std::ostream* progress = nullptr);

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::vector<uint64_t>& seeds);
std::string ablation_json(const std::vector<AblationRow>& rows,
                          const std::vector<uint64_t>& seeds);

// PPM overlay of the predicted classes on the input image.
void write_ppm(const std::string& path, const std::vector<float>& rgb, int h,
               int w);
std::vector<float> class_overlay(const LaneScene& scene,
                                 const std::vector<uint8_t>& pred_classes);

}  // namespace priorlane
