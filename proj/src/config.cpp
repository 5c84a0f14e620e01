#include "priorlane/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "priorlane/errors.hpp"

namespace priorlane {

namespace {

enum class FieldType { int_v, u64_v, double_v, string_v };

struct FieldSpec {
  const char* section;
  const char* key;
  FieldType type;
  std::function<void*(ExperimentConfig&)> ptr;
};

std::vector<FieldSpec> field_table() {
  auto f = [](auto member) {
    return [member](ExperimentConfig& c) -> void* { return &(c.*member); };
  };
  using E = ExperimentConfig;
  return {
      {"model", "variant", FieldType::string_v, f(&E::variant)},
      {"model", "l1", FieldType::int_v, f(&E::l1)},
      {"model", "l2", FieldType::int_v, f(&E::l2)},
      {"model", "heads", FieldType::int_v, f(&E::heads)},
      {"model", "patch", FieldType::int_v, f(&E::patch)},
      {"model", "embed_dim", FieldType::int_v, f(&E::embed_dim)},
      {"model", "prior_size", FieldType::int_v, f(&E::prior_size)},
      {"model", "arf_orientations", FieldType::int_v, f(&E::arf_orientations)},
      {"model", "arf_kernel", FieldType::int_v, f(&E::arf_kernel)},
      {"model", "decode_dim", FieldType::int_v, f(&E::decode_dim)},
      {"model", "exist_weight", FieldType::double_v, f(&E::exist_weight)},
      {"model", "lane_weight", FieldType::double_v, f(&E::lane_weight)},
      {"train", "seed", FieldType::u64_v, f(&E::seed)},
      {"train", "epochs", FieldType::int_v, f(&E::epochs)},
      {"train", "batch", FieldType::int_v, f(&E::batch)},
      {"train", "lr", FieldType::double_v, f(&E::lr)},
      {"train", "optimizer", FieldType::string_v, f(&E::optimizer)},
      {"data", "train", FieldType::string_v, f(&E::train_path)},
      {"data", "test", FieldType::string_v, f(&E::test_path)},
      {"synth", "data_seed", FieldType::u64_v, f(&E::data_seed)},
      {"synth", "scenes", FieldType::int_v, f(&E::scenes)},
      {"synth", "test_scenes", FieldType::int_v, f(&E::test_scenes)},
      {"synth", "image_h", FieldType::int_v, f(&E::image_h)},
      {"synth", "image_w", FieldType::int_v, f(&E::image_w)},
      {"synth", "label_mode", FieldType::string_v, f(&E::label_mode)},
      {"synth", "max_lanes", FieldType::int_v, f(&E::max_lanes)},
      {"synth", "lanes_min", FieldType::int_v, f(&E::lanes_min)},
      {"synth", "lanes_max", FieldType::int_v, f(&E::lanes_max)},
      {"synth", "range", FieldType::double_v, f(&E::range)},
      {"synth", "rot_noise_deg", FieldType::double_v, f(&E::rot_noise_deg)},
      {"synth", "trans_noise", FieldType::double_v, f(&E::trans_noise)},
      {"synth", "occluders_min", FieldType::int_v, f(&E::occluders_min)},
      {"synth", "occluders_max", FieldType::int_v, f(&E::occluders_max)},
      {"synth", "image_noise", FieldType::double_v, f(&E::image_noise)},
      {"synth", "junction_prob", FieldType::double_v, f(&E::junction_prob)},
      {"synth", "clutter_prob", FieldType::double_v, f(&E::clutter_prob)},
      {"synth", "clutter_max", FieldType::int_v, f(&E::clutter_max)},
      {"eval", "protocol", FieldType::string_v, f(&E::protocol)},
  };
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  const auto table = field_table();
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const FieldSpec* spec = nullptr;
    for (const auto& fs : table)
      if (section == fs.section && key == fs.key) spec = &fs;
    if (!spec)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + section + "." + key + "'");
    try {
      switch (spec->type) {
        case FieldType::int_v:
          *static_cast<int*>(spec->ptr(cfg)) = std::stoi(value);
          break;
        case FieldType::u64_v:
          *static_cast<uint64_t*>(spec->ptr(cfg)) = std::stoull(value);
          break;
        case FieldType::double_v:
          *static_cast<double*>(spec->ptr(cfg)) = std::stod(value);
          break;
        case FieldType::string_v:
          *static_cast<std::string*>(spec->ptr(cfg)) = value;
          break;
      }
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": cannot parse value '" + value + "' for " + section +
                        "." + key);
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  ExperimentConfig cfg = parse_config_text(ss.str());
  if (const char* env = std::getenv("PRIORLANE_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("PRIORLANE_SEED is not an integer: '" +
                        std::string(env) + "'");
    }
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  const auto table = field_table();
  std::ostringstream os;
  std::string section;
  for (const auto& fs : table) {
    if (section != fs.section) {
      if (!section.empty()) os << '\n';
      section = fs.section;
      os << '[' << section << "]\n";
    }
    os << fs.key << " = ";
    switch (fs.type) {
      case FieldType::int_v: os << *static_cast<int*>(fs.ptr(copy)); break;
      case FieldType::u64_v: os << *static_cast<uint64_t*>(fs.ptr(copy)); break;
      case FieldType::double_v:
        os << format_double(*static_cast<double*>(fs.ptr(copy)));
        break;
      case FieldType::string_v:
        os << *static_cast<std::string*>(fs.ptr(copy));
        break;
    }
    os << '\n';
  }
  return os.str();
}

SceneRecipe recipe_from_config(const ExperimentConfig& cfg, bool test_split) {
  SceneRecipe r;
  r.seed = test_split ? Rng::mix(cfg.data_seed, 0x7e57) : cfg.data_seed;
  r.scene_count = test_split ? cfg.test_scenes : cfg.scenes;
  r.image_h = cfg.image_h;
  r.image_w = cfg.image_w;
  if (cfg.label_mode == "zjlab")
    r.mode = LabelMode::zjlab;
  else if (cfg.label_mode == "instance")
    r.mode = LabelMode::instance;
  else
    throw ConfigError("config: label_mode must be zjlab or instance, got '" +
                      cfg.label_mode + "'");
  r.max_lanes = cfg.max_lanes;
  r.lanes_min = cfg.lanes_min;
  r.lanes_max = cfg.lanes_max;
  r.perception_range = cfg.range;
  r.rot_noise_deg = cfg.rot_noise_deg;
  r.trans_noise = cfg.trans_noise;
  r.occluders_min = cfg.occluders_min;
  r.occluders_max = cfg.occluders_max;
  r.image_noise = cfg.image_noise;
  r.junction_prob = cfg.junction_prob;
  r.clutter_prob = cfg.clutter_prob;
  r.clutter_max = cfg.clutter_max;
  r.prior_size = cfg.prior_size;
  return r;
}

ModelConfig model_from_config(const ExperimentConfig& cfg, const Dataset& ds) {
  ModelConfig m;
  m.variant = variant_from_string(cfg.variant);
  m.image_h = ds.image_h;
  m.image_w = ds.image_w;
  m.num_classes = ds.num_classes;
  m.max_lanes = ds.max_lanes;
  m.patch = cfg.patch;
  m.embed_dim = cfg.embed_dim;
  m.prior_size = ds.prior_size;
  m.prior_channels = ds.prior_channels;
  m.l1 = cfg.l1;
  m.l2 = cfg.l2;
  m.fusion_heads = cfg.heads;
  m.arf_orientations = cfg.arf_orientations;
  m.arf_kernel = cfg.arf_kernel;
  m.decode_dim = cfg.decode_dim;
  m.exist_loss_weight = cfg.exist_weight;
  m.lane_class_weight = cfg.lane_weight;
  return m;
}

}  // namespace priorlane
