#include "priorlane/grid_map.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "priorlane/errors.hpp"

namespace priorlane {

namespace {

constexpr double kPi = 3.14159265358979323846;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError(std::string("grid map: truncated ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& os, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

float get_f32(std::istream& is, const char* what) {
  const uint32_t u = get_u32(is, what);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u32(os, uint32_t(u));
  put_u32(os, uint32_t(u >> 32));
}

double get_f64(std::istream& is, const char* what) {
  const uint64_t lo = get_u32(is, what);
  const uint64_t hi = get_u32(is, what);
  const uint64_t u = lo | (hi << 32);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

double normalize_heading(double h) {
  h = std::fmod(h, 2.0 * kPi);
  if (h <= -kPi) h += 2.0 * kPi;
  if (h > kPi) h -= 2.0 * kPi;
  return h;
}

std::vector<float> crop_native(const GridMap& map, const Pose& pose,
                               double range_m, int* native_cells) {
  if (range_m <= 0.0) throw ConfigError("crop: perception range must be > 0");
  const int n = std::max(1, int(std::llround(range_m / map.resolution)));
  if (native_cells) *native_cells = n;
  std::vector<float> out(size_t(n) * n * map.c, 0.0f);
  const double fx = std::cos(pose.heading), fy = std::sin(pose.heading);
  const double rx = fy, ry = -fx;  // vehicle right in world frame
  const double res = map.resolution;
  const double half = 0.5 * (n - 1);
  for (int i = 0; i < n; ++i) {
    const double v = (half - i) * res;  // forward offset, row 0 farthest ahead
    for (int j = 0; j < n; ++j) {
      const double u = (j - half) * res;  // right offset
      const double wx = pose.x + u * rx + v * fx;
      const double wy = pose.y + u * ry + v * fy;
      const int col = int(std::floor((wx - map.origin_x) / res));
      const int row = int(std::floor((wy - map.origin_y) / res));
      if (row < 0 || row >= map.h || col < 0 || col >= map.w) continue;
      for (int ch = 0; ch < map.c; ++ch)
        out[(size_t(i) * n + j) * map.c + ch] = float(map.at(row, col, ch));
    }
  }
  return out;
}

LocalPrior crop_local(const GridMap& map, const Pose& pose, double range_m,
                      int out_size) {
  int n = 0;
  std::vector<float> native = crop_native(map, pose, range_m, &n);
  LocalPrior prior;
  prior.s = out_size;
  prior.c = map.c;
  prior.perception_range = range_m;
  prior.source_pose = pose;
  prior.off_map = !map.contains_world(pose.x, pose.y);
  prior.cells.assign(size_t(out_size) * out_size * map.c, 0.0f);
  if (prior.off_map) return prior;  // all-zero crop, flagged

  // Area-average resize n x n -> S x S with exact fractional overlap, valid
  // for both up- and down-sampling.
  const double scale = double(n) / out_size;
  const double inv_area = 1.0 / (scale * scale);
  for (int r = 0; r < out_size; ++r) {
    const double y0 = r * scale, y1 = (r + 1) * scale;
    const int iy0 = int(std::floor(y0)), iy1 = std::min(n, int(std::ceil(y1)));
    for (int col = 0; col < out_size; ++col) {
      const double x0 = col * scale, x1 = (col + 1) * scale;
      const int ix0 = int(std::floor(x0)), ix1 = std::min(n, int(std::ceil(x1)));
      for (int ch = 0; ch < map.c; ++ch) {
        double acc = 0.0;
        for (int iy = iy0; iy < iy1; ++iy) {
          const double wy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
          for (int ix = ix0; ix < ix1; ++ix) {
            const double wx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
            acc += wy * wx * double(native[(size_t(iy) * n + ix) * map.c + ch]);
          }
        }
        prior.cells[(size_t(r) * out_size + col) * map.c + ch] =
            float(acc * inv_area);
      }
    }
  }
  return prior;
}

Pose simulate_coarse_pose(const Pose& pose, double rot_noise_max,
                          double trans_noise_max, uint64_t seed) {
  if (rot_noise_max < 0.0 || trans_noise_max < 0.0)
    throw ConfigError("coarse pose: noise bounds must be >= 0");
  Rng rng(seed);
  Pose out;
  out.heading =
      normalize_heading(pose.heading + rng.uniform(-rot_noise_max, rot_noise_max));
  out.x = pose.x + rng.uniform(-trans_noise_max, trans_noise_max);
  out.y = pose.y + rng.uniform(-trans_noise_max, trans_noise_max);
  return out;
}

void save_grid_map(const std::string& path, const GridMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("grid map: cannot open '" + path + "' for write");
  os.write("PLGM", 4);
  put_u32(os, 1);
  put_u32(os, uint32_t(map.h));
  put_u32(os, uint32_t(map.w));
  put_u32(os, uint32_t(map.c));
  put_f32(os, map.resolution);
  put_f64(os, map.origin_x);
  put_f64(os, map.origin_y);
  os.write(reinterpret_cast<const char*>(map.cells.data()),
           std::streamsize(map.cells.size()));
  if (!os) throw IoError("grid map: write to '" + path + "' failed");
}

GridMap load_grid_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("grid map: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PLGM", 4) != 0)
    throw DataError("grid map: bad magic in '" + path + "'");
  const uint32_t version = get_u32(is, "version");
  if (version != 1)
    throw DataError("grid map: unsupported version " + std::to_string(version));
  GridMap map;
  map.h = int(get_u32(is, "height"));
  map.w = int(get_u32(is, "width"));
  map.c = int(get_u32(is, "channels"));
  map.resolution = get_f32(is, "resolution");
  map.origin_x = get_f64(is, "origin");
  map.origin_y = get_f64(is, "origin");
  if (map.h < 1 || map.w < 1 || map.c < 1 || !(map.resolution > 0.f))
    throw DataError("grid map: invalid header in '" + path + "'");
  map.cells.resize(size_t(map.h) * map.w * map.c);
  if (!is.read(reinterpret_cast<char*>(map.cells.data()),
               std::streamsize(map.cells.size())))
    throw DataError("grid map: truncated cell data in '" + path + "'");
  return map;
}

GridMap load_pgm(const std::string& path, float resolution, double origin_x,
                 double origin_y) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("pgm: cannot open '" + path + "'");
  auto next_token = [&is, &path]() {
    std::string tok;
    while (is) {
      int ch = is.get();
      if (ch == '#') {  // comment to end of line
        while (is && is.get() != '\n') {
        }
        continue;
      }
      if (ch == EOF) break;
      if (std::isspace(ch)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(char(ch));
    }
    if (tok.empty()) throw DataError("pgm: truncated header in '" + path + "'");
    return tok;
  };
  if (next_token() != "P5") throw DataError("pgm: '" + path + "' is not binary P5");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw DataError("pgm: unsupported header in '" + path + "'");
  std::vector<uint8_t> raw(size_t(w) * h);
  if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw DataError("pgm: truncated pixel data in '" + path + "'");
  GridMap map;
  map.h = h;
  map.w = w;
  map.c = 1;
  map.resolution = resolution;
  map.origin_x = origin_x;
  map.origin_y = origin_y;
  map.cells.resize(raw.size());
  // PGM rows run top-to-bottom; the map's row 0 sits at origin_y, so flip.
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col)
      map.cells[size_t(r) * w + col] =
          raw[size_t(h - 1 - r) * w + col] >= 128 ? 1 : 0;
  return map;
}

}  // namespace priorlane
