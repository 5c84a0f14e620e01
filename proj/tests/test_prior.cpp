#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "priorlane/errors.hpp"
#include "priorlane/gradcheck.hpp"
#include "priorlane/grid_map.hpp"
#include "priorlane/knowledge.hpp"
#include "priorlane/ops.hpp"

using namespace priorlane;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Even extent with the origin on a cell corner: poses at multiples of the
// resolution sample cell centers, keeping floor() away from boundaries.
GridMap asymmetric_map(int n = 100) {
  GridMap map;
  map.h = n;
  map.w = n;
  map.c = 1;
  map.resolution = 0.1f;
  map.origin_x = -0.05 * n;
  map.origin_y = -0.05 * n;
  map.cells.resize(size_t(n) * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      map.cells[size_t(r) * n + c] = uint8_t((r * 31 + c * 7 + r * c) % 5);
  return map;
}

// independent nearest-neighbor reimplementation of the window sampler
std::vector<float> brute_force_crop(const GridMap& map, const Pose& pose,
                                    double range_m, int* cells_out) {
  const int n = int(std::llround(range_m / map.resolution));
  *cells_out = n;
  std::vector<float> out(size_t(n) * n, 0.f);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u = (j - 0.5 * (n - 1)) * map.resolution;
      const double v = (0.5 * (n - 1) - i) * map.resolution;
      const double wx = pose.x + v * std::cos(pose.heading) +
                        u * std::sin(pose.heading);
      const double wy = pose.y + v * std::sin(pose.heading) -
                        u * std::cos(pose.heading);
      const int col = int(std::floor((wx - map.origin_x) / map.resolution));
      const int row = int(std::floor((wy - map.origin_y) / map.resolution));
      out[size_t(i) * n + j] = float(map.at(row, col, 0));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("prior") {

TEST_CASE("window cell count follows range / resolution") {
  GridMap map = asymmetric_map(500);
  int n = 0;
  crop_native(map, {0, 0, 0}, 20.0, &n);
  CHECK(n == 200);
  crop_native(map, {0, 0, 0}, 10.0, &n);
  CHECK(n == 100);
}

TEST_CASE("uniform map crops to a uniform prior for any pose inside") {
  GridMap map = asymmetric_map(300);
  std::fill(map.cells.begin(), map.cells.end(), uint8_t(1));
  for (double heading : {0.0, 0.7, -2.1}) {
    LocalPrior prior = crop_local(map, {1.0, -2.0, heading}, 8.0, 40);
    CHECK_FALSE(prior.off_map);
    for (float v : prior.cells) CHECK(v == doctest::Approx(1.0f));
  }
}

TEST_CASE("heading rotated by pi/2 equals the index-remapped axis crop") {
  GridMap map = asymmetric_map(100);
  const Pose center{0, 0, 0};
  int n = 0;
  auto axis = crop_native(map, center, 5.0, &n);
  auto rot = crop_native(map, {0, 0, kPi / 2}, 5.0, &n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(rot[size_t(i) * n + j] == axis[size_t(n - 1 - j) * n + i]);
}

TEST_CASE("crop matches the brute-force sampler for arbitrary headings") {
  GridMap map = asymmetric_map(100);
  for (double heading : {0.31, -1.2, 2.9}) {
    Pose pose{0.4, -0.3, heading};
    int n1 = 0, n2 = 0;
    auto got = crop_native(map, pose, 4.0, &n1);
    auto want = brute_force_crop(map, pose, 4.0, &n2);
    REQUIRE(n1 == n2);
    CHECK(got == want);
  }
}

TEST_CASE("translation by whole cells shifts the delta response by k rows") {
  GridMap map = asymmetric_map(200);
  std::fill(map.cells.begin(), map.cells.end(), uint8_t(0));
  map.cells[size_t(100) * 200 + 100] = 1;  // delta centered at (0.05, 0.05)
  const double res = map.resolution;
  auto find_delta = [](const std::vector<float>& crop, int n, int* row,
                       int* col) {
    *row = -1;
    *col = -1;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (crop[size_t(i) * n + j] > 0.5f) {
          *row = i;
          *col = j;
          return;
        }
  };
  int n = 0;
  auto base = crop_native(map, {0.0, 0.0, 0.0}, 4.0, &n);
  int r0, c0;
  find_delta(base, n, &r0, &c0);
  REQUIRE(r0 >= 0);
  for (int k : {1, 3, 7}) {
    // heading 0: moving forward k cells pulls the delta k rows toward the
    // bottom of the window
    auto moved = crop_native(map, {k * res, 0.0, 0.0}, 4.0, &n);
    int r1, c1;
    find_delta(moved, n, &r1, &c1);
    CHECK(r1 == r0 + k);
    CHECK(c1 == c0);
  }
}

TEST_CASE("pose outside the map flags a warning and zeroes the crop") {
  GridMap map = asymmetric_map(51);
  LocalPrior prior = crop_local(map, {100.0, 100.0, 0.3}, 5.0, 20);
  CHECK(prior.off_map);
  for (float v : prior.cells) CHECK(v == 0.0f);
}

TEST_CASE("coarse pose with zero noise is the pose itself") {
  Pose pose{1.5, -2.5, 0.7};
  Pose out = simulate_coarse_pose(pose, 0.0, 0.0, 99);
  CHECK(out.x == pose.x);
  CHECK(out.y == pose.y);
  CHECK(out.heading == pose.heading);
}

TEST_CASE("coarse pose is deterministic per seed") {
  Pose pose{0, 0, 0};
  Pose a = simulate_coarse_pose(pose, 0.3, 1.0, 1234);
  Pose b = simulate_coarse_pose(pose, 0.3, 1.0, 1234);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(a.heading == b.heading);
  Pose c = simulate_coarse_pose(pose, 0.3, 1.0, 1235);
  CHECK(a.heading != c.heading);
}

TEST_CASE("coarse pose noise is uniform (Kolmogorov-Smirnov)") {
  const int n = 10000;
  const double rot_max = 0.25, trans_max = 1.5;
  std::vector<double> h, x;
  h.reserve(n);
  x.reserve(n);
  for (int i = 0; i < n; ++i) {
    Pose p = simulate_coarse_pose({0, 0, 0}, rot_max, trans_max, uint64_t(i));
    h.push_back((p.heading + rot_max) / (2 * rot_max));
    x.push_back((p.x + trans_max) / (2 * trans_max));
  }
  auto ks = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double d = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
      const double cdf = double(i + 1) / double(v.size());
      d = std::max(d, std::abs(cdf - v[i]));
      d = std::max(d, std::abs(double(i) / double(v.size()) - v[i]));
    }
    return d;
  };
  // critical value at alpha = 0.01 for n = 1e4
  const double critical = 1.63 / std::sqrt(double(n));
  CHECK(ks(h) < critical);
  CHECK(ks(x) < critical);
}

TEST_CASE("knowledge embedding produces (S/P)^2 x E_p tokens") {
  LocalPrior prior;
  prior.s = 200;
  prior.c = 1;
  prior.cells.assign(size_t(200) * 200, 0.5f);
  Rng rng(3);
  std::vector<double> proj(size_t(100) * 64);
  for (double& v : proj) v = rng.uniform(-1, 1);
  Tensor projection = Tensor::from_data({100, 64}, std::move(proj));
  KnowledgeEmbedding emb = embed_knowledge(prior, projection, 10);
  CHECK(emb.tokens.shape() == Shape{400, 64});
  CHECK(emb.grid == 20);
}

TEST_CASE("zero projection gives zero tokens") {
  LocalPrior prior;
  prior.s = 20;
  prior.c = 1;
  prior.cells.assign(400, 0.7f);
  Tensor projection = Tensor::zeros({25, 8});
  KnowledgeEmbedding emb = embed_knowledge(prior, projection, 5);
  for (double v : emb.tokens.data()) CHECK(v == 0.0);
}

TEST_CASE("indivisible patch size is a configuration error") {
  LocalPrior prior;
  prior.s = 20;
  prior.c = 1;
  prior.cells.assign(400, 0.f);
  Tensor projection = Tensor::zeros({9, 4});
  CHECK_THROWS_AS(embed_knowledge(prior, projection, 3), ConfigError);
}

TEST_CASE("token count is invariant to the perception range") {
  GridMap map = asymmetric_map(300);
  Rng rng(4);
  std::vector<double> proj(size_t(100) * 16);
  for (double& v : proj) v = rng.uniform(-1, 1);
  Tensor projection = Tensor::from_data({100, 16}, std::move(proj));
  for (double range : {5.0, 10.0, 20.0}) {
    LocalPrior prior = crop_local(map, {0, 0, 0.2}, range, 200);
    KnowledgeEmbedding emb = embed_knowledge(prior, projection, 10);
    CHECK(emb.tokens.dim(0) == 400);
  }
}

TEST_CASE("permuting patches permutes tokens identically") {
  // patch independence: swapping two whole patches swaps the two tokens
  LocalPrior prior;
  prior.s = 6;
  prior.c = 1;
  prior.cells.resize(36);
  for (int i = 0; i < 36; ++i) prior.cells[size_t(i)] = float(i);
  Rng rng(5);
  std::vector<double> proj(size_t(9) * 4);
  for (double& v : proj) v = rng.uniform(-1, 1);
  Tensor projection = Tensor::from_data({9, 4}, std::move(proj));
  Tensor base = embed_knowledge(prior, projection, 3).tokens;

  LocalPrior swapped = prior;  // swap patch (0,0) with patch (1,1)
  for (int py = 0; py < 3; ++py)
    for (int px = 0; px < 3; ++px)
      std::swap(swapped.cells[size_t(py) * 6 + px],
                swapped.cells[size_t(3 + py) * 6 + 3 + px]);
  Tensor perm = embed_knowledge(swapped, projection, 3).tokens;
  for (int e = 0; e < 4; ++e) {
    CHECK(perm.data()[size_t(0) * 4 + e] == base.data()[size_t(3) * 4 + e]);
    CHECK(perm.data()[size_t(3) * 4 + e] == base.data()[size_t(0) * 4 + e]);
    CHECK(perm.data()[size_t(1) * 4 + e] == base.data()[size_t(1) * 4 + e]);
  }
}

TEST_CASE("embedding gradcheck in the projection") {
  LocalPrior prior;
  prior.s = 8;
  prior.c = 1;
  Rng rng(6);
  prior.cells.resize(64);
  for (float& v : prior.cells) v = float(rng.uniform(0, 1));
  std::vector<double> proj(size_t(16) * 3);
  for (double& v : proj) v = rng.uniform(-1, 1);
  std::vector<Tensor> in = {Tensor::from_data({16, 3}, std::move(proj))};
  auto f = [&prior](std::vector<Tensor>& t) {
    return mean(embed_knowledge(prior, t[0], 4).tokens);
  };
  CHECK(gradcheck_fn(f, in) < 1e-5);
}

TEST_CASE("grid map file round trip and pgm import") {
  GridMap map = asymmetric_map(23);
  map.c = 2;
  map.cells.resize(size_t(23) * 23 * 2);
  for (size_t i = 0; i < map.cells.size(); ++i)
    map.cells[i] = uint8_t(i % 7);
  save_grid_map("test_map.plgm", map);
  GridMap loaded = load_grid_map("test_map.plgm");
  CHECK(loaded.h == map.h);
  CHECK(loaded.w == map.w);
  CHECK(loaded.c == map.c);
  CHECK(loaded.resolution == map.resolution);
  CHECK(loaded.origin_x == map.origin_x);
  CHECK(loaded.cells == map.cells);
  std::remove("test_map.plgm");

  {
    std::ofstream os("test_map.pgm", std::ios::binary);
    os << "P5\n# a comment\n4 2\n255\n";
    const unsigned char px[8] = {0, 255, 10, 200, 255, 0, 130, 90};
    os.write(reinterpret_cast<const char*>(px), 8);
  }
  GridMap pgm = load_pgm("test_map.pgm", 0.5f, 1.0, 2.0);
  CHECK(pgm.h == 2);
  CHECK(pgm.w == 4);
  // bottom image row becomes map row 0; >=128 reads as freespace
  CHECK(pgm.at(0, 0, 0) == 1);
  CHECK(pgm.at(0, 1, 0) == 0);
  CHECK(pgm.at(1, 0, 0) == 0);
  CHECK(pgm.at(1, 1, 0) == 1);
  std::remove("test_map.pgm");
}

TEST_CASE("grid map bad magic raises a data error") {
  {
    std::ofstream os("test_map_bad.plgm", std::ios::binary);
    os << "XXXX";
  }
  CHECK_THROWS_AS(load_grid_map("test_map_bad.plgm"), DataError);
  std::remove("test_map_bad.plgm");
}

TEST_CASE("heading normalization lands in (-pi, pi]") {
  CHECK(normalize_heading(kPi) == doctest::Approx(kPi));
  CHECK(normalize_heading(-kPi) == doctest::Approx(kPi));
  CHECK(normalize_heading(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  CHECK(normalize_heading(-5 * kPi) == doctest::Approx(kPi));
}

}  // TEST_SUITE
