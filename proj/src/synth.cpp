#include "priorlane/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "priorlane/errors.hpp"

namespace priorlane {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kClassWhite = 1, kClassYellow = 2, kClassStop = 3;

struct Camera {
  double fx, fy, cx, cy, height, cos_pitch, sin_pitch;
};

Camera make_camera(const SceneRecipe& r) {
  Camera c;
  c.cx = 0.5 * r.image_w;
  c.cy = 0.5 * r.image_h;
  c.fx = c.cx / std::tan(0.5 * r.horizontal_fov_deg * kPi / 180.0);
  c.fy = c.fx;
  c.height = r.camera_height;
  const double pitch = r.camera_pitch_deg * kPi / 180.0;
  c.cos_pitch = std::cos(pitch);
  c.sin_pitch = std::sin(pitch);
  return c;
}

// world -> camera; returns false behind the camera
bool project(const Camera& cam, const Pose& pose, double wx, double wy,
             double* u, double* v, double* depth) {
  const double dx = wx - pose.x, dy = wy - pose.y;
  const double fxd = std::cos(pose.heading), fyd = std::sin(pose.heading);
  const double v_fwd = dx * fxd + dy * fyd;
  const double v_right = dx * fyd - dy * fxd;
  const double pu = -cam.height;  // ground relative to camera
  const double zc = v_fwd * cam.cos_pitch - pu * cam.sin_pitch;
  if (zc < 0.3) return false;
  const double yc = -v_fwd * cam.sin_pitch - pu * cam.cos_pitch;
  *u = cam.cx + cam.fx * v_right / zc;
  *v = cam.cy + cam.fy * yc / zc;
  *depth = zc;
  return true;
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("dataset: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, uint32_t(v));
  put_u32(os, uint32_t(v >> 32));
}

uint64_t get_u64(std::istream& is) {
  const uint64_t lo = get_u32(is);
  const uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

void put_blob(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

void get_blob(std::istream& is, void* p, size_t n) {
  if (!is.read(reinterpret_cast<char*>(p), std::streamsize(n)))
    throw DataError("dataset: truncated sample");
}

}  // namespace

void SceneRecipe::validate() const {
  if (scene_count < 1) throw ConfigError("recipe: scene count must be >= 1");
  if (lanes_min < 1 || lanes_max < lanes_min)
    throw ConfigError("recipe: lane count range is degenerate");
  if (image_h % 32 != 0 || image_w % 32 != 0)
    throw ConfigError("recipe: image extent must be divisible by 32");
  if (max_lanes < 1 || max_lanes > 8)
    throw ConfigError("recipe: max_lanes must be in [1,8]");
  if (max_lanes < lanes_max + 2)
    throw ConfigError("recipe: max_lanes must cover " +
                      std::to_string(lanes_max + 1) +
                      " boundary lines plus a stop line");
  if (perception_range <= 0 || resolution <= 0 || map_extent <= 0)
    throw ConfigError("recipe: geometry parameters must be positive");
}

World generate_world(const SceneRecipe& recipe, uint64_t seed) {
  recipe.validate();
  Rng rng(seed);
  World world;
  const int cells = int(std::llround(recipe.map_extent / recipe.resolution));
  world.map.h = cells;
  world.map.w = cells;
  world.map.c = 1;
  world.map.resolution = float(recipe.resolution);
  world.map.origin_x = -0.5 * recipe.map_extent;
  world.map.origin_y = -0.5 * recipe.map_extent;
  world.map.cells.assign(size_t(cells) * cells, 0);

  const int n_lanes = int(rng.uniform_int(recipe.lanes_min, recipe.lanes_max));
  const double psi = rng.uniform(-kPi, kPi);  // road direction at map center
  double curvature = rng.uniform(-recipe.curvature_max, recipe.curvature_max);
  if (std::abs(curvature) < 1.0 / 400.0) curvature = 0.0;
  const bool junction = rng.uniform() < recipe.junction_prob;
  const double junction_s = rng.uniform(-6.0, 6.0);

  // Arc-length parameterized centerline through the map center. The step is
  // half a cell so rasterized bands have no gaps.
  const double span = 0.75 * recipe.map_extent;
  const double step = 0.5 * recipe.resolution;
  auto center_at = [&](double s, double* x, double* y, double* heading) {
    if (curvature == 0.0) {
      *x = s * std::cos(psi);
      *y = s * std::sin(psi);
      *heading = psi;
      return;
    }
    const double radius = 1.0 / curvature;
    const double ang = s * curvature;
    // circle center sits at distance R to the left of the start direction
    const double cxw = -radius * std::sin(psi);
    const double cyw = radius * std::cos(psi);
    *x = cxw + radius * std::sin(psi + ang);
    *y = cyw - radius * std::cos(psi + ang);
    *heading = psi + ang;
  };

  const double half_road = 0.5 * n_lanes * recipe.lane_width + recipe.shoulder;
  auto mark_free = [&](double wx, double wy) {
    const int col = int(std::floor((wx - world.map.origin_x) / recipe.resolution));
    const int row = int(std::floor((wy - world.map.origin_y) / recipe.resolution));
    if (row >= 0 && row < cells && col >= 0 && col < cells)
      world.map.cells[size_t(row) * cells + col] = 1;
  };

  for (double s = -span; s <= span; s += step) {
    double x, y, heading;
    center_at(s, &x, &y, &heading);
    const double rx = std::sin(heading), ry = -std::cos(heading);
    for (double t = -half_road; t <= half_road; t += step)
      mark_free(x + t * rx, y + t * ry);
  }
  for (double s = -0.5 * span; s <= 0.5 * span; s += 0.05) {
    double x, y, heading;
    center_at(s, &x, &y, &heading);
    world.centerline.emplace_back(x, y);
    world.center_heading.push_back(heading);
  }
  world.has_junction = junction;
  world.junction_s = junction_s;
  // junction stub: a short perpendicular band widening the freespace
  if (junction) {
    double jx, jy, jh;
    center_at(junction_s, &jx, &jy, &jh);
    const double px = std::sin(jh), py = -std::cos(jh);  // road-right
    for (double a = -8.0; a <= 8.0; a += 0.5 * recipe.resolution)
      for (double b = 0.0; b <= 6.0; b += 0.5 * recipe.resolution)
        mark_free(jx + px * a + std::cos(jh) * b, jy + py * a + std::sin(jh) * b);
  }

  // transverse clutter first so lane labels overwrite it at crossings
  if (rng.uniform() < recipe.clutter_prob) {
    const int bars = 1 + int(rng.uniform_int(0, std::max(0, recipe.clutter_max - 1)));
    for (int b = 0; b < bars; ++b) {
      double cs = rng.uniform(-0.35 * span, 0.35 * span);
      if (junction && std::abs(cs - junction_s) < 4.0)
        cs = junction_s + (cs < junction_s ? -4.0 : 4.0);
      WorldLane bar;
      bar.class_id = 0;
      bar.lane_slot = -1;
      bar.shade = float(rng.uniform(0.84, 0.96));
      double bx, by, bh;
      center_at(cs, &bx, &by, &bh);
      const double px = std::sin(bh), py = -std::cos(bh);
      for (double a = -half_road + recipe.shoulder;
           a <= half_road - recipe.shoulder; a += 0.1)
        bar.points.emplace_back(bx + px * a, by + py * a);
      world.lanes.push_back(std::move(bar));
    }
  }

  // boundary markings: outer lines white, inner separators yellow
  const int n_lines = n_lanes + 1;
  for (int li = 0; li < n_lines; ++li) {
    WorldLane lane;
    lane.lane_slot = li;
    const bool outer = li == 0 || li == n_lines - 1;
    lane.class_id = recipe.mode == LabelMode::zjlab
                        ? (outer ? kClassWhite : kClassYellow)
                        : 1 + std::min(li, recipe.max_lanes - 1);
    const double offset = (li - 0.5 * (n_lines - 1)) * recipe.lane_width;
    for (size_t i = 0; i < world.centerline.size(); ++i) {
      const double heading = world.center_heading[i];
      const double rx = std::sin(heading), ry = -std::cos(heading);
      lane.points.emplace_back(world.centerline[i].first + offset * rx,
                               world.centerline[i].second + offset * ry);
    }
    world.lanes.push_back(std::move(lane));
  }
  if (junction) {
    WorldLane stop;
    stop.lane_slot = std::min(n_lines, recipe.max_lanes - 1);
    stop.class_id = recipe.mode == LabelMode::zjlab
                        ? kClassStop
                        : 1 + stop.lane_slot;
    double jx, jy, jh;
    center_at(junction_s, &jx, &jy, &jh);
    const double px = std::sin(jh), py = -std::cos(jh);
    for (double a = -half_road + recipe.shoulder; a <= half_road - recipe.shoulder;
         a += 0.1)
      stop.points.emplace_back(jx + px * a, jy + py * a);
    world.lanes.push_back(std::move(stop));
  }
  return world;
}

Pose sample_pose(const World& world, const SceneRecipe& recipe, Rng& rng) {
  const int n = int(world.centerline.size());
  // keep the perception window inside the map
  const int margin = int(0.25 * n);
  const double span = 0.75 * recipe.map_extent;
  for (int attempt = 0; attempt < 8; ++attempt) {
    int i;
    if (world.has_junction && rng.uniform() < 0.6) {
      // approach the junction so the stop line falls inside the draw range
      const double back = rng.uniform(3.0, 0.9 * recipe.max_draw_distance);
      const double s = world.junction_s - back;
      i = std::clamp(int((s + 0.5 * span) / 0.05), margin, n - 1 - margin);
    } else {
      i = int(rng.uniform_int(margin, n - 1 - margin));
    }
    const double lateral = rng.uniform(-0.5, 0.5) * recipe.lane_width;
    const double heading =
        world.center_heading[size_t(i)] + rng.uniform(-0.09, 0.09);
    const double rx = std::sin(world.center_heading[size_t(i)]);
    const double ry = -std::cos(world.center_heading[size_t(i)]);
    Pose pose;
    pose.x = world.centerline[size_t(i)].first + lateral * rx;
    pose.y = world.centerline[size_t(i)].second + lateral * ry;
    pose.heading = normalize_heading(heading);
    const int col = int(std::floor((pose.x - world.map.origin_x) /
                                   world.map.resolution));
    const int row = int(std::floor((pose.y - world.map.origin_y) /
                                   world.map.resolution));
    if (world.map.at(row, col, 0) > 0) return pose;
  }
  throw DataError("sample_pose: could not place the vehicle on the road");
}

bool unproject_pixel(const SceneRecipe& recipe, const Pose& pose, int row,
                     int col, double* wx, double* wy) {
  const Camera cam = make_camera(recipe);
  // ray through the pixel in camera coords
  const double xr = (col + 0.5 - cam.cx) / cam.fx;
  const double yr = (row + 0.5 - cam.cy) / cam.fy;
  // camera axes in vehicle coords (forward, right, up)
  const double dir_fwd = cam.cos_pitch - yr * cam.sin_pitch;
  const double dir_up = -cam.sin_pitch - yr * cam.cos_pitch;
  const double dir_right = xr;
  if (dir_up >= -1e-9) return false;  // at or above the horizon
  const double t = cam.height / -dir_up;
  const double v_fwd = t * dir_fwd, v_right = t * dir_right;
  const double fxd = std::cos(pose.heading), fyd = std::sin(pose.heading);
  *wx = pose.x + v_fwd * fxd + v_right * fyd;
  *wy = pose.y + v_fwd * fyd - v_right * fxd;
  return true;
}

LaneScene render_scene(const World& world, const Pose& pose,
                       const SceneRecipe& recipe, uint64_t seed) {
  Rng rng(seed);
  const Camera cam = make_camera(recipe);
  const int h = recipe.image_h, w = recipe.image_w;
  LaneScene scene;
  scene.h = h;
  scene.w = w;
  scene.true_pose = pose;
  scene.image.assign(size_t(3) * h * w, 0.0f);
  scene.label.assign(size_t(h) * w, 0);
  scene.existence.assign(size_t(recipe.max_lanes), 0);
  scene.occluder_mask.assign(size_t(h) * w, 0);

  auto put_px = [&](int row, int col, float r, float g, float b) {
    if (row < 0 || row >= h || col < 0 || col >= w) return;
    scene.image[(0 * size_t(h) + size_t(row)) * w + col] = r;
    scene.image[(1 * size_t(h) + size_t(row)) * w + col] = g;
    scene.image[(2 * size_t(h) + size_t(row)) * w + col] = b;
  };

  // background: sky above the horizon, terrain/road below via unprojection
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      double wx, wy;
      if (!unproject_pixel(recipe, pose, row, col, &wx, &wy)) {
        const float sky = 0.45f + 0.1f * float(row) / float(h);
        put_px(row, col, sky, sky, 0.5f + 0.1f * float(row) / float(h));
        continue;
      }
      const int mc = int(std::floor((wx - world.map.origin_x) /
                                    world.map.resolution));
      const int mr = int(std::floor((wy - world.map.origin_y) /
                                    world.map.resolution));
      const bool road = world.map.at(mr, mc, 0) > 0;
      const float base = road ? 0.25f : 0.12f;
      put_px(row, col, base, base, base);
    }
  }

  // lane markings, drawn with a disc brush whose radius tracks depth
  auto draw_lane_point = [&](const WorldLane& lane, double wx, double wy) {
    double u, v, depth;
    if (!project(cam, pose, wx, wy, &u, &v, &depth)) return;
    const double px_radius =
        std::clamp(0.5 * cam.fx * recipe.marking_width / depth, 0.5, 4.0);
    const int r0 = int(std::floor(v - px_radius)), r1 = int(std::ceil(v + px_radius));
    const int c0 = int(std::floor(u - px_radius)), c1 = int(std::ceil(u + px_radius));
    float cr, cg, cb;
    if (recipe.mode == LabelMode::zjlab && lane.class_id == kClassYellow) {
      cr = 0.90f; cg = 0.76f; cb = 0.18f;
    } else {
      cr = lane.shade; cg = lane.shade; cb = lane.shade - 0.02f;
    }
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        if (row < 0 || row >= h || col < 0 || col >= w) continue;
        const double dr = row + 0.5 - v, dc = col + 0.5 - u;
        if (dr * dr + dc * dc > px_radius * px_radius) continue;
        scene.label[size_t(row) * w + col] = uint8_t(lane.class_id);
        if (lane.lane_slot >= 0 && lane.lane_slot < recipe.max_lanes)
          scene.existence[size_t(lane.lane_slot)] = 1;
        put_px(row, col, cr, cg, cb);
      }
    }
  };

  for (const WorldLane& lane : world.lanes) {
    for (const auto& [wx, wy] : lane.points) {
      const double dx = wx - pose.x, dy = wy - pose.y;
      const double fwd = dx * std::cos(pose.heading) + dy * std::sin(pose.heading);
      if (fwd < 0.5 || fwd > recipe.max_draw_distance) continue;
      draw_lane_point(lane, wx, wy);
    }
  }

  // pixel noise on the image only
  if (recipe.image_noise > 0.0)
    for (float& v : scene.image)
      v = std::clamp(v + float(rng.normal(0.0, recipe.image_noise)), 0.0f, 1.0f);

  // occluders erase image pixels, never labels
  const int n_occ = int(rng.uniform_int(recipe.occluders_min, recipe.occluders_max));
  for (int i = 0; i < n_occ; ++i) {
    const int oh = int(rng.uniform_int(recipe.occluder_size_min, recipe.occluder_size_max));
    const int ow = int(rng.uniform_int(recipe.occluder_size_min, recipe.occluder_size_max));
    const int top = int(rng.uniform_int(0, std::max(0, h - oh)));
    const int left = int(rng.uniform_int(0, std::max(0, w - ow)));
    const float shade = float(rng.uniform(0.3, 0.7));
    for (int row = top; row < std::min(h, top + oh); ++row)
      for (int col = left; col < std::min(w, left + ow); ++col) {
        put_px(row, col, shade, shade, shade);
        scene.occluder_mask[size_t(row) * w + col] = 1;
      }
  }

  // coarse pose + prior crop
  scene.coarse_pose = simulate_coarse_pose(
      pose, recipe.rot_noise_deg * kPi / 180.0, recipe.trans_noise,
      rng.next_u64());
  scene.prior = crop_local(world.map, scene.coarse_pose,
                           recipe.perception_range, recipe.prior_size);
  return scene;
}

Dataset generate_dataset(const SceneRecipe& recipe) {
  recipe.validate();
  Dataset ds;
  ds.image_h = recipe.image_h;
  ds.image_w = recipe.image_w;
  ds.num_classes = recipe.num_classes();
  ds.max_lanes = recipe.max_lanes;
  ds.mode = recipe.mode;
  ds.prior_size = recipe.prior_size;
  ds.prior_channels = 1;
  ds.perception_range = float(recipe.perception_range);
  ds.scenes.reserve(size_t(recipe.scene_count));
  for (int i = 0; i < recipe.scene_count; ++i) {
    const uint64_t world_seed = Rng::mix(recipe.seed, uint64_t(i) * 2);
    const uint64_t scene_seed = Rng::mix(recipe.seed, uint64_t(i) * 2 + 1);
    World world = generate_world(recipe, world_seed);
    Rng pose_rng(Rng::mix(world_seed, 0x9e37));
    const Pose pose = sample_pose(world, recipe, pose_rng);
    ds.scenes.push_back(render_scene(world, pose, recipe, scene_seed));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("dataset: cannot open '" + path + "' for write");
  os.write("PLDS", 4);
  put_u32(os, 1);
  put_u32(os, uint32_t(ds.scenes.size()));
  put_u32(os, uint32_t(ds.image_h));
  put_u32(os, uint32_t(ds.image_w));
  put_u32(os, uint32_t(ds.num_classes));
  put_u32(os, uint32_t(ds.max_lanes));
  put_u32(os, uint32_t(ds.mode));
  put_u32(os, uint32_t(ds.prior_size));
  put_u32(os, uint32_t(ds.prior_channels));
  uint32_t range_bits;
  std::memcpy(&range_bits, &ds.perception_range, 4);
  put_u32(os, range_bits);

  const std::streampos table_pos = os.tellp();
  for (size_t i = 0; i < ds.scenes.size(); ++i) put_u64(os, 0);

  std::vector<uint64_t> offsets(ds.scenes.size());
  for (size_t i = 0; i < ds.scenes.size(); ++i) {
    const LaneScene& s = ds.scenes[i];
    offsets[i] = uint64_t(os.tellp());
    put_blob(os, s.image.data(), s.image.size() * 4);
    put_blob(os, s.label.data(), s.label.size());
    uint8_t mask = 0;
    for (size_t k = 0; k < s.existence.size(); ++k)
      if (s.existence[k]) mask |= uint8_t(1u << k);
    put_blob(os, &mask, 1);
    const double poses[6] = {s.true_pose.x,   s.true_pose.y,
                             s.true_pose.heading, s.coarse_pose.x,
                             s.coarse_pose.y, s.coarse_pose.heading};
    put_blob(os, poses, sizeof(poses));
    const uint8_t off_map = s.prior.off_map ? 1 : 0;
    put_blob(os, &off_map, 1);
    put_blob(os, s.prior.cells.data(), s.prior.cells.size() * 4);
  }
  os.seekp(table_pos);
  for (uint64_t off : offsets) put_u64(os, off);
  if (!os) throw IoError("dataset: write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("dataset: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PLDS", 4) != 0)
    throw DataError("dataset: bad magic in '" + path + "'");
  const uint32_t version = get_u32(is);
  if (version != 1)
    throw DataError("dataset: unsupported version " + std::to_string(version));
  Dataset ds;
  const uint32_t count = get_u32(is);
  ds.image_h = int(get_u32(is));
  ds.image_w = int(get_u32(is));
  ds.num_classes = int(get_u32(is));
  ds.max_lanes = int(get_u32(is));
  const uint32_t mode = get_u32(is);
  if (mode > 1) throw DataError("dataset: unknown label mode");
  ds.mode = LabelMode(mode);
  ds.prior_size = int(get_u32(is));
  ds.prior_channels = int(get_u32(is));
  const uint32_t range_bits = get_u32(is);
  std::memcpy(&ds.perception_range, &range_bits, 4);
  if (ds.image_h < 1 || ds.image_w < 1 || ds.prior_size < 1 ||
      ds.prior_channels < 1 || ds.max_lanes < 1 || ds.max_lanes > 8)
    throw DataError("dataset: invalid header in '" + path + "'");

  std::vector<uint64_t> offsets(count);
  for (uint32_t i = 0; i < count; ++i) offsets[i] = get_u64(is);

  ds.scenes.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    is.seekg(std::streamoff(offsets[i]));
    if (!is) throw DataError("dataset: bad sample offset");
    LaneScene& s = ds.scenes[i];
    s.h = ds.image_h;
    s.w = ds.image_w;
    s.image.resize(size_t(3) * s.h * s.w);
    get_blob(is, s.image.data(), s.image.size() * 4);
    s.label.resize(size_t(s.h) * s.w);
    get_blob(is, s.label.data(), s.label.size());
    uint8_t mask = 0;
    get_blob(is, &mask, 1);
    s.existence.assign(size_t(ds.max_lanes), 0);
    for (int k = 0; k < ds.max_lanes; ++k)
      s.existence[size_t(k)] = (mask >> k) & 1u;
    double poses[6];
    get_blob(is, poses, sizeof(poses));
    s.true_pose = {poses[0], poses[1], poses[2]};
    s.coarse_pose = {poses[3], poses[4], poses[5]};
    uint8_t off_map = 0;
    get_blob(is, &off_map, 1);
    s.prior.s = ds.prior_size;
    s.prior.c = ds.prior_channels;
    s.prior.perception_range = ds.perception_range;
    s.prior.source_pose = s.coarse_pose;
    s.prior.off_map = off_map != 0;
    s.prior.cells.resize(size_t(ds.prior_size) * ds.prior_size *
                         ds.prior_channels);
    get_blob(is, s.prior.cells.data(), s.prior.cells.size() * 4);
  }
  return ds;
}

}  // namespace priorlane
