#pragma once

// Deterministic synthetic lane scenes: a BEV freespace world with lane
// polylines, a pinhole rendering of them, per-pixel labels, per-lane
// existence flags, and the coarse-pose prior crop. Dataset bytes are a pure
// function of the recipe.
//
// Dataset file ("PLDS"): magic | version u32 | count u32 | header (image
// extent, classes, lanes, label mode, prior geometry) | u64 sample offsets |
// samples {image f32, label u8, existence bitmask u8, true pose f64x3,
// coarse pose f64x3, prior: off_map u8 + cells f32}.

#include <cstdint>
#include <string>
#include <vector>

#include "priorlane/grid_map.hpp"

namespace priorlane {

enum class LabelMode : uint8_t {
  zjlab = 0,     // background, white line, yellow line, stop line
  instance = 1,  // background + one class per lane slot
};

struct SceneRecipe {
  uint64_t seed = 0;
  int scene_count = 200;
  int image_h = 64, image_w = 128;
  LabelMode mode = LabelMode::zjlab;
  int max_lanes = 5;  // boundary-line slots plus one for a stop line
  // world
  double map_extent = 60.0;     // meters, square
  double resolution = 0.1;      // meters per cell
  int lanes_min = 2, lanes_max = 3;
  double lane_width = 3.0;      // meters
  double marking_width = 0.15;  // meters
  double shoulder = 0.5;        // freespace margin beyond outer markings
  double curvature_max = 1.0 / 30.0;  // 1/m
  double junction_prob = 0.35;
  // transverse pavement joints / shadows: drawn like markings, labeled
  // background; only the prior's junction stub separates them from stop lines
  double clutter_prob = 0.6;
  int clutter_max = 2;
  // camera
  double camera_height = 1.4;
  double camera_pitch_deg = 12.0;
  double horizontal_fov_deg = 100.0;
  double max_draw_distance = 8.0;  // meters
  // degradation
  int occluders_min = 2, occluders_max = 5;
  int occluder_size_min = 6, occluder_size_max = 20;  // pixels
  double image_noise = 0.03;
  double rot_noise_deg = 15.0;
  double trans_noise = 1.0;  // meters
  // prior
  double perception_range = 20.0;
  int prior_size = kPriorSize;

  int num_classes() const {
    return mode == LabelMode::zjlab ? 4 : 1 + max_lanes;
  }
  void validate() const;
};

struct WorldLane {
  int class_id = 0;   // class in the recipe's label mode; 0 = clutter
  int lane_slot = 0;  // existence slot, left to right; -1 = no slot
  std::vector<std::pair<double, double>> points;  // world xy
  float shade = 0.92f;  // marking brightness in the rendered image
};

struct World {
  GridMap map;
  std::vector<WorldLane> lanes;
  // road geometry for pose sampling
  std::vector<std::pair<double, double>> centerline;
  std::vector<double> center_heading;
  bool has_junction = false;
  double junction_s = 0.0;  // arc length along the centerline
};

struct LaneScene {
  int h = 0, w = 0;
  std::vector<float> image;       // 3*h*w in [0,1]
  std::vector<uint8_t> label;     // h*w class indices
  std::vector<uint8_t> existence; // max_lanes entries of 0/1
  Pose true_pose, coarse_pose;
  LocalPrior prior;               // cropped at the coarse pose
  std::vector<uint8_t> occluder_mask;  // h*w, debug only, not serialized
};

struct Dataset {
  int image_h = 0, image_w = 0;
  int num_classes = 0, max_lanes = 0;
  LabelMode mode = LabelMode::zjlab;
  int prior_size = 0, prior_channels = 1;
  float perception_range = 0.f;
  std::vector<LaneScene> scenes;
};

World generate_world(const SceneRecipe& recipe, uint64_t seed);
Pose sample_pose(const World& world, const SceneRecipe& recipe, Rng& rng);
LaneScene render_scene(const World& world, const Pose& pose,
                       const SceneRecipe& recipe, uint64_t seed);

// generate_world + sample_pose + render_scene for every scene index.
Dataset generate_dataset(const SceneRecipe& recipe);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Ground-plane unprojection of a pixel center; false above the horizon.
bool unproject_pixel(const SceneRecipe& recipe, const Pose& pose, int row,
                     int col, double* wx, double* wy);

}  // namespace priorlane
