#include "priorlane/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "priorlane/checkpoint.hpp"
#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/optim.hpp"

namespace priorlane {

namespace {

Tensor image_tensor(const LaneScene& scene) {
  std::vector<double> data(scene.image.begin(), scene.image.end());
  return Tensor::from_data({3, scene.h, scene.w}, std::move(data));
}

std::vector<uint8_t> predicted_classes(const PriorLaneModel& model,
                                       const SegOutput& out) {
  Tensor probs = model.class_probabilities(out);
  const int k = probs.dim(0), h = probs.dim(1), w = probs.dim(2);
  std::vector<uint8_t> pred(size_t(h) * w, 0);
  const auto& v = probs.data();
  for (int64_t i = 0; i < int64_t(h) * w; ++i) {
    int best = 0;
    double best_p = v[size_t(i)];
    for (int c = 1; c < k; ++c) {
      const double p = v[size_t(c) * h * w + i];
      if (p > best_p) {
        best_p = p;
        best = c;
      }
    }
    pred[size_t(i)] = uint8_t(best);
  }
  return pred;
}

const LocalPrior* prior_for(const PriorLaneModel& model,
                            const LaneScene& scene) {
  const Variant v = model.config().variant;
  if (v == Variant::priorlane_ke || v == Variant::priorlane_kea)
    return &scene.prior;
  return nullptr;
}

std::string grad_norm_dump(ParamMap& params) {
  std::ostringstream os;
  os.precision(6);
  for (auto& [name, t] : params.items) {
    double norm = 0.0;
    if (t.has_grad())
      for (double g : t.grad_ref()) norm += g * g;
    os << "  " << name << " grad_norm=" << std::sqrt(norm) << '\n';
  }
  return os.str();
}

}  // namespace

TrainResult train_model(PriorLaneModel& model, const ExperimentConfig& cfg,
                        const Dataset& train_ds, const Dataset& val_ds,
                        std::ostream* log,
                        const std::string& checkpoint_path) {
  if (train_ds.scenes.empty()) throw DataError("train: empty training set");
  const bool use_adam = cfg.optimizer == "adam";
  if (!use_adam && cfg.optimizer != "sgd")
    throw ConfigError("train: optimizer must be adam or sgd, got '" +
                      cfg.optimizer + "'");
  Adam adam(cfg.lr);
  Sgd sgd(cfg.lr);

  TrainResult result;
  result.best_val_miou = -1.0;
  const int n = int(train_ds.scenes.size());
  const int batch = std::max(1, std::min(cfg.batch, n));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // deterministic shuffle per epoch
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xe90c + uint64_t(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[size_t(i)], order[size_t(shuffle_rng.uniform_int(0, i))]);

    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (int b = 0; b < count; ++b) {
        const LaneScene& scene = train_ds.scenes[size_t(order[size_t(start + b)])];
        SegOutput out = model.forward(image_tensor(scene),
                                      prior_for(model, scene));
        Tensor loss = model.loss(out, scene.label, scene.existence);
        const double lv = loss.item();
        if (!std::isfinite(lv))
          throw NumericError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + "\n" +
                             grad_norm_dump(model.params()));
        batch_loss += lv;
        backward(loss);
      }
      const double inv = 1.0 / count;
      for (auto& [name, p] : model.params().items)
        for (double& g : p.grad()) g *= inv;
      if (use_adam)
        adam.step(model.params());
      else
        sgd.step(model.params());
      ++result.steps;
      epoch_loss += batch_loss * inv;
      ++epoch_batches;
    }
    epoch_loss /= std::max(1, epoch_batches);
    result.final_loss = epoch_loss;

    double val_miou = -1.0;
    if (!val_ds.scenes.empty()) {
      val_miou = evaluate_model(model, val_ds, "miou").miou;
      if (val_miou > result.best_val_miou) {
        result.best_val_miou = val_miou;
        if (!checkpoint_path.empty())
          save_checkpoint(checkpoint_path, model.params());
      }
    }
    if (log) {
      nlohmann::ordered_json j;
      j["epoch"] = epoch;
      j["loss"] = epoch_loss;
      if (val_miou >= 0.0) j["val_miou"] = val_miou;
      (*log) << j.dump() << '\n';
    }
  }
  if (!checkpoint_path.empty() && val_ds.scenes.empty())
    save_checkpoint(checkpoint_path, model.params());
  return result;
}

std::vector<LanePolyline> gt_lanes_from_labels(const LaneScene& scene,
                                               int max_lanes) {
  std::vector<LanePolyline> lanes;
  for (int k = 0; k < max_lanes; ++k) {
    if (!scene.existence[size_t(k)]) continue;
    const uint8_t cls = uint8_t(k + 1);
    LanePolyline lane;
    for (int row = 0; row < scene.h; ++row) {
      double mass = 0.0, moment = 0.0;
      for (int col = 0; col < scene.w; ++col) {
        if (scene.label[size_t(row) * scene.w + col] == cls) {
          mass += 1.0;
          moment += col;
        }
      }
      if (mass > 0.0) lane.points.emplace_back(moment / mass, double(row));
    }
    if (!lane.points.empty()) lanes.push_back(std::move(lane));
  }
  return lanes;
}

EvalReport evaluate_model(const PriorLaneModel& model, const Dataset& ds,
                          const std::string& protocol) {
  if (ds.scenes.empty()) throw DataError("eval: empty dataset");
  if (model.config().num_classes != ds.num_classes)
    throw ConfigError("eval: model has " +
                      std::to_string(model.config().num_classes) +
                      " classes, dataset has " +
                      std::to_string(ds.num_classes));
  if (protocol == "miou") {
    ConfusionAccumulator acc(ds.num_classes);
    for (const LaneScene& scene : ds.scenes) {
      SegOutput out =
          model.forward(image_tensor(scene), prior_for(model, scene));
      acc.add(predicted_classes(model, out), scene.label);
    }
    return acc.report();
  }
  if (protocol != "culane-f1" && protocol != "tusimple")
    throw UsageError("eval: unknown protocol '" + protocol + "'");
  if (ds.mode != LabelMode::instance)
    throw ConfigError("eval: protocol '" + protocol +
                      "' needs an instance-mode dataset");

  EvalReport total;
  total.protocol = protocol;
  int64_t c_clip = 0, s_clip = 0, fp_lanes = 0, fn_lanes = 0;
  int64_t pred_lanes = 0, gt_lane_count = 0;
  for (const LaneScene& scene : ds.scenes) {
    SegOutput out = model.forward(image_tensor(scene), prior_for(model, scene));
    Tensor probs = model.class_probabilities(out);
    Tensor exist = sigmoid(out.existence);
    const std::vector<double> exist_probs(exist.data().begin(),
                                          exist.data().end());
    const std::vector<LanePolyline> preds =
        decode_lanes(probs.data(), ds.num_classes, scene.h, scene.w,
                     exist_probs);
    const std::vector<LanePolyline> gts =
        gt_lanes_from_labels(scene, ds.max_lanes);
    if (protocol == "culane-f1") {
      EvalReport r = culane_f1(preds, gts, scene.h, scene.w);
      total.tp += r.tp;
      total.fp += r.fp;
      total.fn += r.fn;
    } else {
      EvalReport r = tusimple_accuracy(preds, gts);
      int64_t scene_s = 0;
      for (const auto& g : gts) scene_s += int64_t(g.points.size());
      c_clip += r.tp;
      s_clip += scene_s;
      fp_lanes += int64_t(std::llround(r.tusimple_fp_rate * double(preds.size())));
      fn_lanes += int64_t(std::llround(r.tusimple_fn_rate * double(gts.size())));
      pred_lanes += int64_t(preds.size());
      gt_lane_count += int64_t(gts.size());
    }
  }
  if (protocol == "culane-f1") {
    const int64_t dp = total.tp + total.fp, dr = total.tp + total.fn;
    total.precision = dp == 0 ? 1.0 : double(total.tp) / double(dp);
    total.recall = dr == 0 ? 1.0 : double(total.tp) / double(dr);
    total.f1 = (total.precision + total.recall) > 0.0
                   ? 2.0 * total.precision * total.recall /
                         (total.precision + total.recall)
                   : 0.0;
  } else {
    total.tusimple_accuracy = s_clip == 0 ? 1.0 : double(c_clip) / double(s_clip);
    total.tusimple_fp_rate =
        pred_lanes == 0 ? 0.0 : double(fp_lanes) / double(pred_lanes);
    total.tusimple_fn_rate =
        gt_lane_count == 0 ? 0.0 : double(fn_lanes) / double(gt_lane_count);
  }
  return total;
}

namespace {

struct Cell {
  std::string variant;
  int l1, l2;
  double range;
};

}  // namespace

std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const AblationSpec& spec, int workers,
                                      std::ostream* progress) {
  if (spec.seeds.empty()) throw UsageError("ablate: need at least one seed");
  const std::vector<std::string> variants =
      spec.variants.empty() ? std::vector<std::string>{base.variant}
                            : spec.variants;
  const std::vector<int> l1s = spec.l1.empty() ? std::vector<int>{base.l1}
                                               : spec.l1;
  const std::vector<int> l2s = spec.l2.empty() ? std::vector<int>{base.l2}
                                               : spec.l2;
  const std::vector<double> ranges =
      spec.range.empty() ? std::vector<double>{base.range} : spec.range;

  // datasets depend only on the range axis; build them once, up front
  struct SplitPair {
    Dataset train, test;
  };
  std::vector<std::pair<double, SplitPair>> data_cache;
  for (double r : ranges) {
    ExperimentConfig c = base;
    c.range = r;
    SplitPair pair;
    pair.train = generate_dataset(recipe_from_config(c, false));
    pair.test = generate_dataset(recipe_from_config(c, true));
    data_cache.emplace_back(r, std::move(pair));
  }
  auto data_for = [&](double r) -> const SplitPair& {
    for (const auto& [key, pair] : data_cache)
      if (key == r) return pair;
    throw UsageError("ablate: missing dataset cache entry");
  };

  std::vector<Cell> cells;
  for (const std::string& v : variants)
    for (int l1 : l1s)
      for (int l2 : l2s)
        for (double r : ranges) cells.push_back({v, l1, l2, r});

  std::vector<AblationRow> rows(cells.size());
  std::atomic<size_t> next{0};
  std::atomic<size_t> done{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= cells.size()) return;
      const Cell& cell = cells[idx];
      AblationRow row;
      row.variant = cell.variant;
      row.l1 = cell.l1;
      row.l2 = cell.l2;
      row.range = cell.range;
      try {
        const SplitPair& data = data_for(cell.range);
        for (uint64_t seed : spec.seeds) {
          ExperimentConfig cfg = base;
          cfg.variant = cell.variant;
          cfg.l1 = cell.l1;
          cfg.l2 = cell.l2;
          cfg.range = cell.range;
          cfg.seed = seed;
          PriorLaneModel model(model_from_config(cfg, data.train), seed);
          TrainResult tr = train_model(model, cfg, data.train, data.test,
                                       nullptr);
          row.per_seed_miou.push_back(tr.best_val_miou);
        }
        double total = 0.0;
        for (double m : row.per_seed_miou) total += m;
        row.mean_miou = total / double(row.per_seed_miou.size());
      } catch (const ConfigError& e) {
        row.skipped = true;
        row.note = e.what();
      }
      rows[idx] = std::move(row);
      const size_t d = done.fetch_add(1) + 1;
      if (progress)
        (*progress) << "ablate: cell " << d << "/" << cells.size() << " done\n";
    }
  };
  const int nw = std::max(1, std::min<int>(workers, int(cells.size())));
  std::vector<std::thread> pool;
  pool.reserve(size_t(nw));
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         const std::vector<uint64_t>& seeds) {
  std::ostringstream os;
  os.precision(10);
  os << "variant,l1,l2,range";
  for (uint64_t s : seeds) os << ",miou_seed" << s;
  os << ",miou_mean,status\n";
  for (const AblationRow& r : rows) {
    os << r.variant << ',' << r.l1 << ',' << r.l2 << ',' << r.range;
    for (size_t i = 0; i < seeds.size(); ++i) {
      os << ',';
      if (!r.skipped && i < r.per_seed_miou.size()) os << r.per_seed_miou[i];
    }
    os << ',';
    if (!r.skipped) os << r.mean_miou;
    os << ',' << (r.skipped ? "skipped" : "ok") << '\n';
  }
  return os.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows,
                          const std::vector<uint64_t>& seeds) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const AblationRow& r : rows) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["l1"] = r.l1;
    j["l2"] = r.l2;
    j["range"] = r.range;
    if (r.skipped) {
      j["status"] = "skipped";
      j["note"] = r.note;
    } else {
      j["status"] = "ok";
      nlohmann::ordered_json per_seed = nlohmann::ordered_json::object();
      for (size_t i = 0; i < seeds.size() && i < r.per_seed_miou.size(); ++i)
        per_seed[std::to_string(seeds[i])] = r.per_seed_miou[i];
      j["miou_per_seed"] = per_seed;
      j["miou_mean"] = r.mean_miou;
    }
    arr.push_back(j);
  }
  return arr.dump(2);
}

void write_ppm(const std::string& path, const std::vector<float>& rgb, int h,
               int w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("ppm: cannot open '" + path + "' for write");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> row(size_t(w) * 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const float v = rgb[(size_t(ch) * h + r) * w + c];
        row[size_t(c) * 3 + ch] =
            (unsigned char)(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
      }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
}

std::vector<float> class_overlay(const LaneScene& scene,
                                 const std::vector<uint8_t>& pred_classes) {
  // fixed class -> color table
  static const float kColors[9][3] = {
      {0.f, 0.f, 0.f},     {0.1f, 0.9f, 0.1f},  {0.95f, 0.85f, 0.1f},
      {0.95f, 0.2f, 0.2f}, {0.2f, 0.5f, 0.95f}, {0.8f, 0.2f, 0.9f},
      {0.1f, 0.9f, 0.9f},  {0.95f, 0.6f, 0.1f}, {0.6f, 0.9f, 0.2f}};
  std::vector<float> out = scene.image;
  for (int r = 0; r < scene.h; ++r)
    for (int c = 0; c < scene.w; ++c) {
      const uint8_t cls = pred_classes[size_t(r) * scene.w + c];
      if (cls == 0) continue;
      const float* col = kColors[cls % 9];
      for (int ch = 0; ch < 3; ++ch) {
        float& px = out[(size_t(ch) * scene.h + r) * scene.w + c];
        px = 0.5f * px + 0.5f * col[ch];
      }
    }
  return out;
}

}  // namespace priorlane
