#pragma once

// The three evaluation protocols: segmentation mIoU over accumulated
// confusion counts, lane-instance F1 with 30-px rasterized lanes matched at
// IoU > 0.5, and key-point accuracy within 20 px. Plus the segmentation ->
// lane-instance decoding they need.

#include <cstdint>
#include <string>
#include <vector>

namespace priorlane {

struct LanePolyline {
  // (x, y) pixel points, one per sampled row, rows strictly increasing
  std::vector<std::pair<double, double>> points;
};

struct EvalReport {
  std::string protocol;  // "miou" | "culane-f1" | "tusimple"
  // miou
  std::vector<double> per_class_iou;  // -1 marks classes absent everywhere
  double miou = 0.0;
  // culane-f1
  int64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // tusimple
  double tusimple_accuracy = 0.0;
  double tusimple_fp_rate = 0.0, tusimple_fn_rate = 0.0;

  std::string to_json() const;
};

// Pixel confusion counts; reports add like a monoid.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes);
  void add(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);
  void merge(const ConfusionAccumulator& other);
  EvalReport report() const;
  int num_classes() const { return k_; }

 private:
  int k_;
  std::vector<int64_t> counts_;  // pred * k + gt
};

EvalReport miou(const std::vector<uint8_t>& pred,
                const std::vector<uint8_t>& gt, int num_classes);

// Per-lane-instance decoding (instance label mode): channel k of
// class_probs[(1+k), H, W] emits a lane when existence_probs[k] passes the
// threshold; each sampled row contributes the probability-weighted mean
// column of pixels above pixel_threshold.
std::vector<LanePolyline> decode_lanes(const std::vector<double>& class_probs,
                                       int num_classes, int h, int w,
                                       const std::vector<double>& existence_probs,
                                       double exist_threshold = 0.5,
                                       double pixel_threshold = 0.3,
                                       int row_stride = 1);

// Lanes rasterized as width-px disc strokes; optimal one-to-one assignment
// maximizing total IoU; strict IoU > iou_threshold counts a true positive.
EvalReport culane_f1(const std::vector<LanePolyline>& preds,
                     const std::vector<LanePolyline>& gts, int h, int w,
                     int width = 30, double iou_threshold = 0.5);

// Key points match within tol px on shared rows; lane-level FP/FN use the
// conventional 85%-matched-points rule.
EvalReport tusimple_accuracy(const std::vector<LanePolyline>& preds,
                             const std::vector<LanePolyline>& gts,
                             double tol = 20.0);

// Lane text files: one lane per line, space-separated "x y" pairs.
void write_lanes_txt(const std::string& path,
                     const std::vector<LanePolyline>& lanes);
std::vector<LanePolyline> read_lanes_txt(const std::string& path);

// Brute-force disc-stroke mask; shared with tests.
std::vector<uint8_t> rasterize_lane(const LanePolyline& lane, int h, int w,
                                    int width);

}  // namespace priorlane
