#pragma once

// Flat INI-style experiment configuration. parse -> serialize -> parse is
// the identity; every key is typed and unknown keys are rejected, which
// keeps ablation sweeps diffable.

#include <cstdint>
#include <string>

#include "priorlane/model.hpp"
#include "priorlane/synth.hpp"

namespace priorlane {

struct ExperimentConfig {
  // [model]
  std::string variant = "priorlane-kea";
  int l1 = 4, l2 = 4;
  int heads = 8;
  int patch = 10;
  int embed_dim = 64;
  int prior_size = 200;
  int arf_orientations = 4;
  int arf_kernel = 3;
  int decode_dim = 64;
  double exist_weight = 0.1;
  double lane_weight = 3.0;
  // [train]
  uint64_t seed = 0;
  int epochs = 10;
  int batch = 8;
  double lr = 1e-3;
  std::string optimizer = "adam";
  // [data] dataset paths; empty means "generate from [synth]"
  std::string train_path;
  std::string test_path;
  // [synth]
  uint64_t data_seed = 1234;
  int scenes = 200;
  int test_scenes = 50;
  int image_h = 64, image_w = 128;
  std::string label_mode = "zjlab";
  int max_lanes = 5;
  int lanes_min = 2, lanes_max = 3;
  double range = 20.0;
  double rot_noise_deg = 15.0;
  double trans_noise = 1.0;
  int occluders_min = 2, occluders_max = 5;
  double image_noise = 0.03;
  double junction_prob = 0.35;
  double clutter_prob = 0.6;
  int clutter_max = 2;
  // [eval]
  std::string protocol = "miou";
};

ExperimentConfig parse_config_text(const std::string& text);
// Reads the file and applies the PRIORLANE_SEED environment override.
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Recipe for one split; the test split draws from a decorrelated seed.
SceneRecipe recipe_from_config(const ExperimentConfig& cfg, bool test_split);
// Model settings; dataset supplies image extent and label geometry.
ModelConfig model_from_config(const ExperimentConfig& cfg, const Dataset& ds);

}  // namespace priorlane
