#pragma once

// BEV prior-knowledge raster and the pose-conditioned local crop.
//
// Grid-map file ("PLGM"): magic | version u32 | H u32 | W u32 | C u32 |
// resolution f32 | origin f64 x2 | u8 cells row-major channel-minor.
// Single-channel maps can also come from binary PGM (P5); pixels >= 128 are
// treated as freespace.

#include <cstdint>
#include <string>
#include <vector>

#include "priorlane/rng.hpp"

namespace priorlane {

struct Pose {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  // radians, normalized to (-pi, pi]
};

double normalize_heading(double h);

struct GridMap {
  int h = 0, w = 0, c = 1;
  float resolution = 0.1f;  // meters per cell
  double origin_x = 0.0, origin_y = 0.0;  // world position of cell (0,0)
  std::vector<uint8_t> cells;  // ((row * w) + col) * c + ch

  uint8_t at(int row, int col, int ch) const {
    if (row < 0 || row >= h || col < 0 || col >= w) return 0;
    return cells[(size_t(row) * w + col) * c + ch];
  }
  bool contains_world(double wx, double wy) const {
    return wx >= origin_x && wx < origin_x + double(w) * resolution &&
           wy >= origin_y && wy < origin_y + double(h) * resolution;
  }
};

inline constexpr int kPriorSize = 200;  // resize target S

struct LocalPrior {
  int s = kPriorSize;
  int c = 1;
  double perception_range = 0.0;  // meters (window side length)
  Pose source_pose;
  bool off_map = false;  // pose fell outside the map; cells are all zero
  std::vector<float> cells;  // s*s*c, row-major channel-minor, in [0,1]
};

// range_m x range_m window centered at the pose, rotated so the heading
// points up, nearest-neighbor sampled at native map resolution. Cells beyond
// the map read 0.
std::vector<float> crop_native(const GridMap& map, const Pose& pose,
                               double range_m, int* native_cells);

// crop_native followed by an area-average resize to out_size x out_size.
LocalPrior crop_local(const GridMap& map, const Pose& pose, double range_m,
                      int out_size = kPriorSize);

// Uniform noise in [-max, +max] on heading and on x, y independently.
Pose simulate_coarse_pose(const Pose& pose, double rot_noise_max,
                          double trans_noise_max, uint64_t seed);

void save_grid_map(const std::string& path, const GridMap& map);
GridMap load_grid_map(const std::string& path);
GridMap load_pgm(const std::string& path, float resolution, double origin_x,
                 double origin_y);

}  // namespace priorlane
