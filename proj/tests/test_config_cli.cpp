#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "priorlane/config.hpp"
#include "priorlane/errors.hpp"
#include "priorlane/train.hpp"

using namespace priorlane;

namespace {

#ifndef PRIORLANE_CLI_PATH
#define PRIORLANE_CLI_PATH "priorlane"
#endif

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PRIORLANE_CLI_PATH) + " " + args +
                          " > cli_out.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

}  // namespace

TEST_SUITE("config_cli") {

TEST_CASE("parse applies defaults and typed overrides") {
  ExperimentConfig cfg = parse_config_text(
      "[model]\n"
      "variant = mit-lane\n"
      "l1 = 2\n"
      "[train]\n"
      "lr = 0.0005\n"
      "seed = 7\n"
      "[synth]\n"
      "scenes = 12\n");
  CHECK(cfg.variant == "mit-lane");
  CHECK(cfg.l1 == 2);
  CHECK(cfg.l2 == 4);  // untouched default
  CHECK(cfg.lr == doctest::Approx(5e-4));
  CHECK(cfg.seed == 7);
  CHECK(cfg.scenes == 12);
}

TEST_CASE("comments and blank lines are ignored") {
  ExperimentConfig cfg = parse_config_text(
      "# top comment\n"
      "[model]\n"
      "\n"
      "l1 = 8  # trailing comment\n");
  CHECK(cfg.l1 == 8);
}

TEST_CASE("unknown keys and malformed lines are config errors") {
  CHECK_THROWS_AS(parse_config_text("[model]\nnot_a_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\nl1: 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[mystery]\nl1 = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\nl1 = watermelon\n"), ConfigError);
}

TEST_CASE("parse, serialize, parse is the identity") {
  ExperimentConfig cfg = parse_config_text(
      "[model]\nvariant = priorlane-ke\nl1 = 3\nexist_weight = 0.25\n"
      "[train]\nlr = 0.00123\nepochs = 5\n"
      "[synth]\nrange = 12.5\nlabel_mode = instance\n");
  const std::string once = serialize_config(cfg);
  ExperimentConfig reparsed = parse_config_text(once);
  CHECK(serialize_config(reparsed) == once);
  CHECK(reparsed.range == cfg.range);
  CHECK(reparsed.lr == cfg.lr);  // bit-exact through 17 significant digits
}

TEST_CASE("PRIORLANE_SEED overrides the config seed") {
  write_file("test_cfg_seed.ini", "[train]\nseed = 3\n");
  setenv("PRIORLANE_SEED", "99", 1);
  ExperimentConfig cfg = load_config("test_cfg_seed.ini");
  CHECK(cfg.seed == 99);
  unsetenv("PRIORLANE_SEED");
  ExperimentConfig cfg2 = load_config("test_cfg_seed.ini");
  CHECK(cfg2.seed == 3);
  std::remove("test_cfg_seed.ini");
}

TEST_CASE("recipe derivation separates train and test seeds") {
  ExperimentConfig cfg;
  SceneRecipe train = recipe_from_config(cfg, false);
  SceneRecipe test = recipe_from_config(cfg, true);
  CHECK(train.seed != test.seed);
  CHECK(train.scene_count == cfg.scenes);
  CHECK(test.scene_count == cfg.test_scenes);
}

TEST_CASE("cli: missing subcommand or bad flags exit with usage code") {
  CHECK(run_cli("") == 1);
  CHECK(run_cli("definitely-not-a-command") == 1);
  CHECK(run_cli("synth") == 1);  // --recipe is required
}

TEST_CASE("cli: zero-scene recipe exits with an error") {
  write_file("test_cfg_zero.ini", "[synth]\nscenes = 0\n");
  CHECK(run_cli("synth --recipe test_cfg_zero.ini --out test_zero.plds") != 0);
  std::remove("test_cfg_zero.ini");
}

TEST_CASE("cli: synth writes a dataset, prints the histogram, and is stable") {
  write_file("test_cfg_synth.ini",
             "[synth]\nscenes = 3\ntest_scenes = 1\ndata_seed = 77\n");
  REQUIRE(run_cli("synth --recipe test_cfg_synth.ini --out test_a.plds") == 0);
  const std::string out = slurp("cli_out.txt");
  CHECK(out.find("class pixel histogram:") != std::string::npos);
  // histogram totals h*w*count
  Dataset ds = read_dataset("test_a.plds");
  CHECK(ds.scenes.size() == 3);
  int64_t total = 0;
  {
    ConfusionAccumulator dummy(ds.num_classes);
    for (const LaneScene& s : ds.scenes)
      total += int64_t(s.label.size());
  }
  CHECK(total == int64_t(3) * ds.image_h * ds.image_w);

  REQUIRE(run_cli("synth --recipe test_cfg_synth.ini --out test_b.plds") == 0);
  CHECK(slurp("test_a.plds") == slurp("test_b.plds"));  // byte stable
  std::remove("test_a.plds");
  std::remove("test_b.plds");
  std::remove("test_cfg_synth.ini");
}

TEST_CASE("cli: corrupt dataset input exits with the data code") {
  write_file("test_bad.plds", "JUNKJUNKJUNK");
  write_file("test_cfg_eval.ini", "[data]\ntest = test_bad.plds\n");
  CHECK(run_cli("eval --config test_cfg_eval.ini --dataset test_bad.plds") == 2);
  std::remove("test_bad.plds");
  std::remove("test_cfg_eval.ini");
}

TEST_CASE("cli: gradcheck with zero tolerance fails with the numeric code") {
  CHECK(run_cli("gradcheck --scope ops --tolerance 0") == 3);
}

TEST_CASE("cli: gradcheck report covers every registered op") {
  REQUIRE(run_cli("gradcheck --scope ops") == 0);
  const std::string out = slurp("cli_out.txt");
  for (const char* name :
       {"matmul", "conv2d", "grid_sample", "softmax", "layer_norm",
        "cross_entropy", "reduce_max0", "upsample_bilinear"})
    CHECK(out.find(name) != std::string::npos);
}

TEST_CASE("cli: train, eval and render run end to end on a micro config") {
  write_file("test_cfg_run.ini",
             "[model]\nvariant = mit-lane\nl1 = 1\nl2 = 1\n"
             "[train]\nepochs = 1\nbatch = 4\nseed = 1\n"
             "[synth]\nscenes = 6\ntest_scenes = 2\nimage_h = 32\n"
             "image_w = 64\ndata_seed = 5\n");
  REQUIRE(run_cli("train --config test_cfg_run.ini --out test_run") == 0);
  CHECK(slurp("test_run/train_log.jsonl").find("\"val_miou\"") !=
        std::string::npos);
  REQUIRE(run_cli("eval --config test_cfg_run.ini --checkpoint "
                  "test_run/best.plck --protocol miou --out test_report.json") ==
          0);
  const std::string report = slurp("test_report.json");
  CHECK(report.find("\"miou\"") != std::string::npos);
  REQUIRE(run_cli("render --config test_cfg_run.ini --checkpoint "
                  "test_run/best.plck --out test_render --limit 2") == 0);
  CHECK(slurp("test_render/sample_0000.ppm").substr(0, 2) == "P6");
  CHECK(slurp("test_render/sample_0000.lanes.json").find("\"lanes\"") !=
        std::string::npos);
  std::remove("test_report.json");
  std::remove("test_cfg_run.ini");
  if (std::system("rm -rf test_run test_render") != 0) WARN("cleanup failed");
}

TEST_CASE("cli: ablate emits per-seed and mean columns with skip handling") {
  write_file("test_cfg_abl.ini",
             "[model]\nvariant = mit-lane\nl1 = 1\nl2 = 1\n"
             "[train]\nepochs = 1\nbatch = 4\n"
             "[synth]\nscenes = 4\ntest_scenes = 2\nimage_h = 32\n"
             "image_w = 64\n");
  REQUIRE(run_cli("ablate --config test_cfg_abl.ini --out test_abl "
                  "--l1 1 2 --seeds 0 1 --workers 2") == 0);
  const std::string csv = slurp("test_abl/ablation.csv");
  CHECK(csv.find("variant,l1,l2,range,miou_seed0,miou_seed1,miou_mean,status") !=
        std::string::npos);
  // 2 cells + header
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 3);
  const std::string json = slurp("test_abl/ablation.json");
  CHECK(json.find("\"miou_per_seed\"") != std::string::npos);
  CHECK(json.find("\"miou_mean\"") != std::string::npos);
  std::remove("test_cfg_abl.ini");
  if (std::system("rm -rf test_abl") != 0) WARN("cleanup failed");
}

TEST_CASE("ablation mean equals the mean of per-seed values") {
  std::vector<AblationRow> rows(1);
  rows[0].variant = "mit-lane";
  rows[0].per_seed_miou = {0.25, 0.5, 0.75};
  rows[0].mean_miou = 0.5;
  const std::string csv = ablation_csv(rows, {0, 1, 2});
  CHECK(csv.find("0.25,0.5,0.75,0.5,ok") != std::string::npos);
  std::remove("cli_out.txt");
}

}  // TEST_SUITE
