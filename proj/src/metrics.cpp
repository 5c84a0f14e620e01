#include "priorlane/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "priorlane/errors.hpp"

namespace priorlane {

namespace {

double iou_of_masks(const std::vector<uint8_t>& a,
                    const std::vector<uint8_t>& b) {
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

// Best one-to-one assignment by exhaustive permutation; lane counts are <= 8
// per image. Returns chosen[i] = gt index for pred i, or -1.
std::vector<int> optimal_assignment(const std::vector<std::vector<double>>& score) {
  const int np = int(score.size());
  const int ng = np > 0 ? int(score[0].size()) : 0;
  std::vector<int> perm(size_t(std::max(np, ng)));
  // permute gt slots over preds; extra slots are -1
  std::vector<int> slots;
  for (int g = 0; g < ng; ++g) slots.push_back(g);
  for (int i = ng; i < np; ++i) slots.push_back(-1);
  std::sort(slots.begin(), slots.end());
  std::vector<int> best(np, -1);
  double best_total = -1.0;
  do {
    double total = 0.0;
    for (int i = 0; i < np; ++i)
      if (slots[size_t(i)] >= 0) total += score[size_t(i)][size_t(slots[size_t(i)])];
    if (total > best_total) {
      best_total = total;
      for (int i = 0; i < np; ++i) best[size_t(i)] = slots[size_t(i)];
    }
  } while (std::next_permutation(slots.begin(), slots.end()));
  return best;
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  if (protocol == "miou") {
    j["miou"] = miou;
    nlohmann::ordered_json pci = nlohmann::ordered_json::object();
    for (size_t c = 0; c < per_class_iou.size(); ++c)
      if (per_class_iou[c] >= 0.0)
        pci[std::to_string(c)] = per_class_iou[c];
    j["per_class_iou"] = pci;
  } else if (protocol == "culane-f1") {
    j["f1"] = f1;
    j["precision"] = precision;
    j["recall"] = recall;
    j["tp"] = tp;
    j["fp"] = fp;
    j["fn"] = fn;
  } else if (protocol == "tusimple") {
    j["tusimple_accuracy"] = tusimple_accuracy;
    j["fp"] = tusimple_fp_rate;
    j["fn"] = tusimple_fn_rate;
  }
  return j.dump();
}

ConfusionAccumulator::ConfusionAccumulator(int num_classes) : k_(num_classes) {
  if (k_ < 2) throw UsageError("confusion: need at least 2 classes");
  counts_.assign(size_t(k_) * k_, 0);
}

void ConfusionAccumulator::add(const std::vector<uint8_t>& pred,
                               const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size())
    throw UsageError("confusion: mask sizes differ (" +
                     std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + ")");
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= k_ || gt[i] >= k_)
      throw DataError("confusion: label exceeds class count");
    ++counts_[size_t(pred[i]) * k_ + gt[i]];
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.k_ != k_) throw UsageError("confusion: class count mismatch");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

EvalReport ConfusionAccumulator::report() const {
  EvalReport r;
  r.protocol = "miou";
  r.per_class_iou.assign(size_t(k_), -1.0);
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < k_; ++c) {
    int64_t tp = counts_[size_t(c) * k_ + c];
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < k_; ++o) {
      if (o == c) continue;
      fp += counts_[size_t(c) * k_ + o];  // predicted c, truly o
      fn += counts_[size_t(o) * k_ + c];  // predicted o, truly c
    }
    if (tp + fp + fn == 0) continue;  // absent from both pred and gt
    const double iou = double(tp) / double(tp + fp + fn);
    r.per_class_iou[size_t(c)] = iou;
    total += iou;
    ++present;
  }
  r.miou = present > 0 ? total / present : 0.0;
  return r;
}

EvalReport miou(const std::vector<uint8_t>& pred,
                const std::vector<uint8_t>& gt, int num_classes) {
  ConfusionAccumulator acc(num_classes);
  acc.add(pred, gt);
  return acc.report();
}

std::vector<LanePolyline> decode_lanes(const std::vector<double>& class_probs,
                                       int num_classes, int h, int w,
                                       const std::vector<double>& existence_probs,
                                       double exist_threshold,
                                       double pixel_threshold, int row_stride) {
  if (int64_t(class_probs.size()) != int64_t(num_classes) * h * w)
    throw UsageError("decode_lanes: probability raster size mismatch");
  std::vector<LanePolyline> lanes;
  const int max_lanes = int(existence_probs.size());
  for (int k = 0; k < max_lanes && k + 1 < num_classes; ++k) {
    if (existence_probs[size_t(k)] < exist_threshold) continue;
    const double* plane = class_probs.data() + size_t(k + 1) * h * w;
    LanePolyline lane;
    for (int row = 0; row < h; row += row_stride) {
      double mass = 0.0, moment = 0.0;
      for (int col = 0; col < w; ++col) {
        const double p = plane[size_t(row) * w + col];
        if (p > pixel_threshold) {
          mass += p;
          moment += p * col;
        }
      }
      if (mass <= 0.0) continue;  // no mass on this row
      lane.points.emplace_back(moment / mass, double(row));
    }
    if (!lane.points.empty()) lanes.push_back(std::move(lane));
  }
  return lanes;
}

std::vector<uint8_t> rasterize_lane(const LanePolyline& lane, int h, int w,
                                    int width) {
  std::vector<uint8_t> mask(size_t(h) * w, 0);
  const double radius = 0.5 * width;
  const double r2 = radius * radius;
  auto stamp_segment = [&](double x0, double y0, double x1, double y1) {
    const int cmin = std::max(0, int(std::floor(std::min(x0, x1) - radius)));
    const int cmax = std::min(w - 1, int(std::ceil(std::max(x0, x1) + radius)));
    const int rmin = std::max(0, int(std::floor(std::min(y0, y1) - radius)));
    const int rmax = std::min(h - 1, int(std::ceil(std::max(y0, y1) + radius)));
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int row = rmin; row <= rmax; ++row) {
      for (int col = cmin; col <= cmax; ++col) {
        const double px = col - x0, py = row - y0;
        double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = px - t * dx, ey = py - t * dy;
        if (ex * ex + ey * ey <= r2) mask[size_t(row) * w + col] = 1;
      }
    }
  };
  if (lane.points.size() == 1)
    stamp_segment(lane.points[0].first, lane.points[0].second,
                  lane.points[0].first, lane.points[0].second);
  for (size_t i = 0; i + 1 < lane.points.size(); ++i)
    stamp_segment(lane.points[i].first, lane.points[i].second,
                  lane.points[i + 1].first, lane.points[i + 1].second);
  return mask;
}

EvalReport culane_f1(const std::vector<LanePolyline>& preds,
                     const std::vector<LanePolyline>& gts, int h, int w,
                     int width, double iou_threshold) {
  if (h < 1 || w < 1) throw UsageError("culane_f1: empty image extent");
  std::vector<std::vector<uint8_t>> pred_masks, gt_masks;
  pred_masks.reserve(preds.size());
  for (const auto& lane : preds)
    pred_masks.push_back(rasterize_lane(lane, h, w, width));
  gt_masks.reserve(gts.size());
  for (const auto& lane : gts)
    gt_masks.push_back(rasterize_lane(lane, h, w, width));

  std::vector<std::vector<double>> iou(preds.size(),
                                       std::vector<double>(gts.size(), 0.0));
  for (size_t i = 0; i < preds.size(); ++i)
    for (size_t j = 0; j < gts.size(); ++j)
      iou[i][j] = iou_of_masks(pred_masks[i], gt_masks[j]);

  EvalReport r;
  r.protocol = "culane-f1";
  if (!preds.empty() && !gts.empty()) {
    const std::vector<int> match = optimal_assignment(iou);
    for (size_t i = 0; i < preds.size(); ++i)
      if (match[i] >= 0 && iou[i][size_t(match[i])] > iou_threshold) ++r.tp;
  }
  r.fp = int64_t(preds.size()) - r.tp;
  r.fn = int64_t(gts.size()) - r.tp;
  const int64_t denom_p = r.tp + r.fp, denom_r = r.tp + r.fn;
  // empty-vs-empty counts as perfect
  r.precision = denom_p == 0 ? 1.0 : double(r.tp) / double(denom_p);
  r.recall = denom_r == 0 ? 1.0 : double(r.tp) / double(denom_r);
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

EvalReport tusimple_accuracy(const std::vector<LanePolyline>& preds,
                             const std::vector<LanePolyline>& gts,
                             double tol) {
  // matched key points per (pred, gt) pair over the gt's rows
  std::vector<std::vector<double>> matched(
      preds.size(), std::vector<double>(gts.size(), 0.0));
  for (size_t i = 0; i < preds.size(); ++i) {
    for (size_t j = 0; j < gts.size(); ++j) {
      int count = 0;
      for (const auto& [gx, gy] : gts[j].points) {
        for (const auto& [px, py] : preds[i].points) {
          if (py == gy && std::abs(px - gx) <= tol) {
            ++count;
            break;
          }
        }
      }
      matched[i][j] = double(count);
    }
  }
  int64_t s_clip = 0;
  for (const auto& g : gts) s_clip += int64_t(g.points.size());

  EvalReport r;
  r.protocol = "tusimple";
  int64_t c_clip = 0;
  std::vector<bool> gt_hit(gts.size(), false);
  int64_t fp_lanes = 0;
  if (!preds.empty() && !gts.empty()) {
    const std::vector<int> match = optimal_assignment(matched);
    for (size_t i = 0; i < preds.size(); ++i) {
      if (match[i] < 0) {
        ++fp_lanes;
        continue;
      }
      const size_t j = size_t(match[i]);
      c_clip += int64_t(matched[i][j]);
      const double frac =
          gts[j].points.empty() ? 0.0 : matched[i][j] / double(gts[j].points.size());
      if (frac >= 0.85)
        gt_hit[j] = true;
      else
        ++fp_lanes;
    }
  } else {
    fp_lanes = int64_t(preds.size());
  }
  int64_t fn_lanes = 0;
  for (bool hit : gt_hit)
    if (!hit) ++fn_lanes;
  if (gts.empty()) fn_lanes = 0;

  r.tusimple_accuracy = s_clip == 0 ? 1.0 : double(c_clip) / double(s_clip);
  r.tusimple_fp_rate =
      preds.empty() ? 0.0 : double(fp_lanes) / double(preds.size());
  r.tusimple_fn_rate = gts.empty() ? 0.0 : double(fn_lanes) / double(gts.size());
  r.tp = c_clip;
  return r;
}

void write_lanes_txt(const std::string& path,
                     const std::vector<LanePolyline>& lanes) {
  std::ofstream os(path);
  if (!os) throw IoError("lanes: cannot open '" + path + "' for write");
  os.precision(17);
  for (const auto& lane : lanes) {
    bool first = true;
    for (const auto& [x, y] : lane.points) {
      if (!first) os << ' ';
      os << x << ' ' << y;
      first = false;
    }
    os << '\n';
  }
}

std::vector<LanePolyline> read_lanes_txt(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("lanes: cannot open '" + path + "'");
  std::vector<LanePolyline> lanes;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    LanePolyline lane;
    double x, y;
    while (ls >> x >> y) lane.points.emplace_back(x, y);
    if (!lane.points.empty()) lanes.push_back(std::move(lane));
  }
  return lanes;
}

}  // namespace priorlane
