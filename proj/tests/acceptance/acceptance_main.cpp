// Acceptance suite: one pass/fail line per criterion. Exit code 0 only if
// every criterion passes. Criterion 6 trains the variant ladder on the
// seeded synthetic dataset; expect roughly an hour of wall time on 2 cores.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "priorlane/audit.hpp"
#include "priorlane/config.hpp"
#include "priorlane/kea.hpp"
#include "priorlane/metrics.hpp"
#include "priorlane/model.hpp"
#include "priorlane/ops.hpp"
#include "priorlane/rng.hpp"
#include "priorlane/train.hpp"
#include "priorlane/transformer.hpp"

using namespace priorlane;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("CRITERION %d [%s]: %s — %s\n", idx, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

Tensor rnd(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> d(size_t(shape_numel(s)));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(s), std::move(d));
}

std::vector<double> rot90_stack(const std::vector<double>& v, int n, int g) {
  std::vector<double> out(v.size());
  for (int ch = 0; ch < n; ++ch)
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c)
        out[(size_t(ch) * g + r) * g + c] =
            v[(size_t(ch) * g + c) * g + (g - 1 - r)];
  return out;
}

std::vector<double> shift_channels(const std::vector<double>& v, int n,
                                   int g) {
  std::vector<double> out(v.size());
  const size_t plane = size_t(g) * g;
  for (int ch = 0; ch < n; ++ch) {
    const int src = ((ch - 1) % n + n) % n;
    std::copy(v.begin() + src * plane, v.begin() + (src + 1) * plane,
              out.begin() + ch * plane);
  }
  return out;
}

// ---- criterion 1: full gradient audit under 5 minutes ---------------------
bool criterion_gradient_audit() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name = "-";
  bool ok = true;
  for (GradCase& c : gradcheck_scope("full")) {
    const double err = c.run();
    if (err > worst) {
      worst = err;
      worst_name = c.name;
    }
    ok = ok && err < 1e-4;
  }
  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  ok = ok && dt < 300.0;
  std::ostringstream os;
  os << "worst rel err " << worst << " (" << worst_name << "), tolerance 1e-4, "
     << int(dt) << "s of 300s";
  report(1, "gradient audit", ok, os.str());
  return ok;
}

// ---- criterion 2: Eq. 2 rotation invariance --------------------------------
bool criterion_rotation_invariance() {
  Rng rng(2024);
  const int g = 10, n = 4;
  ArfLayer layer(n, 3, rng);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = rnd({n, g, g}, rng);
    Tensor o = or_pool(layer.forward(x));
    Tensor tx = Tensor::from_data(
        {n, g, g}, shift_channels(rot90_stack(x.data(), n, g), n, g));
    Tensor ot = or_pool(layer.forward(tx));
    const std::vector<double> want = rot90_stack(o.data(), 1, g);
    // interior pixels (one-pixel margin inside the same-padding ring)
    for (int r = 1; r < g - 1; ++r)
      for (int c = 1; c < g - 1; ++c)
        worst = std::max(worst, std::abs(ot.data()[size_t(r) * g + c] -
                                         want[size_t(r) * g + c]));
  }
  const bool ok = worst < 1e-9;
  std::ostringstream os;
  os << "pooled response vs rotated input over 100 trials, worst |diff| "
     << worst << " (tolerance 1e-9)";
  report(2, "rotation invariance", ok, os.str());
  return ok;
}

// ---- criterion 3: STN identity ---------------------------------------------
bool criterion_stn_identity() {
  Rng rng(3030);
  const int g = 20, e = 16;
  Tensor tokens = rnd({g * g, e}, rng);
  Tensor aligned = align_tokens(tokens, AffineParams::identity().to_tensor(), g);
  double worst = 0.0;
  for (size_t i = 0; i < tokens.data().size(); ++i)
    worst = std::max(worst,
                     std::abs(aligned.data()[i] - tokens.data()[i]));

  LocalizationHead head(g, rng);
  Tensor params = head.forward(rnd({1, g, g}, rng));
  const bool exact_identity =
      params.data() == std::vector<double>{1, 0, 0, 0, 1, 0};
  const bool ok = worst < 1e-12 && exact_identity;
  std::ostringstream os;
  os << "identity resample worst |diff| " << worst
     << " (tolerance 1e-12); fresh localize identity: "
     << (exact_identity ? "exact" : "NOT exact");
  report(3, "stn identity", ok, os.str());
  return ok;
}

// ---- criterion 4: attention contract ---------------------------------------
bool criterion_attention_contract() {
  Rng rng(4040);
  bool ok = true;
  std::ostringstream os;

  // rows sum to one via the exact computation the attention path uses
  double worst_row = 0.0;
  Tensor q = rnd({6, 8}, rng), k = rnd({9, 8}, rng);
  Tensor attn = softmax(scale(matmul(q, transpose2d(k)), 1.0 / std::sqrt(8.0)), 1);
  for (int i = 0; i < 6; ++i) {
    double total = 0.0;
    for (int j = 0; j < 9; ++j) total += attn.data()[size_t(i) * 9 + j];
    worst_row = std::max(worst_row, std::abs(total - 1.0));
  }
  ok = ok && worst_row < 1e-9;
  os << "row-sum err " << worst_row;

  // image outputs invariant to prior permutation
  FusionTransformer ft(8, 2, 16, 2, 2, rng);
  ParamMap params;
  ft.collect_params("ft", params);
  Rng jitter(4141);
  for (auto& [name, t] : params.items)
    for (double& v : t.data()) v += jitter.uniform(-0.2, 0.2);
  Tensor img = rnd({5, 8}, rng);
  Tensor prior = rnd({7, 8}, rng);
  Tensor base = ft.fuse(img, prior);
  double worst_perm = 0.0;
  Rng perm_rng(4242);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> perm(7);
    for (int i = 0; i < 7; ++i) perm[size_t(i)] = i;
    for (int i = 6; i > 0; --i)
      std::swap(perm[size_t(i)], perm[size_t(perm_rng.uniform_int(0, i))]);
    std::vector<double> shuffled(size_t(7) * 8);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 8; ++c)
        shuffled[size_t(r) * 8 + c] =
            prior.data()[size_t(perm[size_t(r)]) * 8 + c];
    Tensor out = ft.fuse(img, Tensor::from_data({7, 8}, std::move(shuffled)));
    for (size_t i = 0; i < base.data().size(); ++i)
      worst_perm = std::max(worst_perm,
                            std::abs(out.data()[i] - base.data()[i]));
  }
  ok = ok && worst_perm < 1e-9;
  os << ", prior-permutation err " << worst_perm;

  // hand-computed two-token example, d = 1, identity projections
  SelfAttention hand(1, 1, rng);
  ParamMap hp;
  hand.collect_params("h", hp);
  for (auto& [name, t] : hp.items) {
    std::fill(t.data().begin(), t.data().end(), 0.0);
    if (name.back() == 'w' && name.find(".b") == std::string::npos)
      t.data()[0] = 1.0;
  }
  Tensor y = hand.forward(Tensor::from_data({2, 1}, {1.0, 0.0}));
  const double e = std::exp(1.0);
  const double err0 = std::abs(y.data()[0] - e / (e + 1));
  const double err1 = std::abs(y.data()[1] - 0.5);
  ok = ok && err0 < 1e-9 && err1 < 1e-9;
  os << ", two-token example err " << std::max(err0, err1)
     << " (all tolerances 1e-9)";
  report(4, "attention contract", ok, os.str());
  return ok;
}

// ---- criterion 5: metric oracles -------------------------------------------
bool criterion_metric_oracles() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream os;

  // miou vs brute-force confusion on 100 random mask pairs, exact
  Rng rng(5050);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + int(rng.uniform_int(0, 4));
    const int n = 64 + int(rng.uniform_int(0, 256));
    const size_t len = size_t(n);
    std::vector<uint8_t> pred(len), gt(len);
    for (int i = 0; i < n; ++i) {
      pred[size_t(i)] = uint8_t(rng.uniform_int(0, k - 1));
      gt[size_t(i)] = uint8_t(rng.uniform_int(0, k - 1));
    }
    // independent confusion-matrix oracle
    std::vector<int64_t> cm(size_t(k) * k, 0);
    for (int i = 0; i < n; ++i) ++cm[size_t(pred[size_t(i)]) * k + gt[size_t(i)]];
    double total = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
      int64_t tp = cm[size_t(c) * k + c], fp = 0, fn = 0;
      for (int o = 0; o < k; ++o) {
        if (o == c) continue;
        fp += cm[size_t(c) * k + o];
        fn += cm[size_t(o) * k + c];
      }
      if (tp + fp + fn == 0) continue;
      total += double(tp) / double(tp + fp + fn);
      ++present;
    }
    const double want = present ? total / present : 0.0;
    if (miou(pred, gt, k).miou != want) ++mismatches;
  }
  ok = ok && mismatches == 0;
  os << "miou oracle mismatches " << mismatches << "/100";

  // 1-of-2 matched case: F1 exactly 2/3
  auto vertical = [](double x) {
    LanePolyline lane;
    for (int r = 0; r < 60; ++r) lane.points.emplace_back(x, double(r));
    return lane;
  };
  EvalReport f = culane_f1({vertical(20)}, {vertical(20), vertical(70)}, 60, 100);
  const bool f1_exact = f.tp == 1 && f.fp == 0 && f.fn == 1 &&
                        f.precision == 1.0 && f.recall == 0.5 &&
                        std::abs(f.f1 - 2.0 / 3.0) < 1e-15;
  ok = ok && f1_exact;
  os << "; culane 1-of-2 F1=" << f.f1;

  // 20 / 21 px boundary
  const bool b20 =
      tusimple_accuracy({vertical(60)}, {vertical(40)}).tusimple_accuracy == 1.0;
  const bool b21 =
      tusimple_accuracy({vertical(61)}, {vertical(40)}).tusimple_accuracy == 0.0;
  ok = ok && b20 && b21;
  os << "; boundary 20px=" << (b20 ? "match" : "BAD") << " 21px="
     << (b21 ? "miss" : "BAD");

  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  ok = ok && dt < 60.0;
  os << "; " << int(dt) << "s of 60s";
  report(5, "metric oracles", ok, os.str());
  return ok;
}

// ---- criteria 6 & 8: ordering experiment + determinism ---------------------
ExperimentConfig ordering_config() {
  ExperimentConfig cfg;
  cfg.scenes = 200;
  cfg.test_scenes = 50;
  cfg.image_h = 64;
  cfg.image_w = 128;
  cfg.range = 20.0;
  cfg.rot_noise_deg = 15.0;
  cfg.l1 = 2;
  cfg.l2 = 2;
  cfg.epochs = 10;
  cfg.batch = 8;
  cfg.lr = 3e-3;
  return cfg;
}

struct OrderingOutcome {
  bool ran = false;
  double mit = 0.0, ke = 0.0, kea = 0.0;
  std::string csv, json;
};

OrderingOutcome run_ordering(const ExperimentConfig& cfg) {
  AblationSpec spec;
  spec.variants = {"mit-lane", "priorlane-ke", "priorlane-kea"};
  spec.seeds = {0, 1, 2};
  OrderingOutcome out;
  std::vector<AblationRow> rows = run_ablation(cfg, spec, 2, nullptr);
  for (const AblationRow& r : rows) {
    if (r.skipped) return out;
    if (r.variant == "mit-lane") out.mit = r.mean_miou;
    if (r.variant == "priorlane-ke") out.ke = r.mean_miou;
    if (r.variant == "priorlane-kea") out.kea = r.mean_miou;
  }
  out.csv = ablation_csv(rows, spec.seeds);
  out.json = ablation_json(rows, spec.seeds);
  out.ran = true;
  return out;
}

bool criterion_ordering(const OrderingOutcome& o, bool crit2, bool crit3,
                        double wall_seconds) {
  bool ok = o.ran;
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << "mean mIoU over seeds {0,1,2}: mit-lane " << o.mit
     << ", ke " << o.ke << ", kea " << o.kea;
  if (o.ran) {
    const bool ke_ok = o.ke >= o.mit;
    const bool kea_margin = o.kea > o.mit + 0.01;
    bool kea_vs_ke = o.kea >= o.ke;
    if (!kea_vs_ke) {
      // seed-noise downgrade: KEA within 0.25 points of KE and the
      // mechanism invariants (criteria 2-3) hold
      kea_vs_ke = o.kea >= o.ke - 0.0025 && crit2 && crit3;
      os << (kea_vs_ke ? " [KE/KEA gap within seed noise: downgrade applied]"
                       : "");
    }
    ok = ke_ok && kea_margin && kea_vs_ke;
    os << "; ke>=mit " << (ke_ok ? "yes" : "NO") << ", kea>mit+1pt "
       << (kea_margin ? "yes" : "NO");
  } else {
    os << "; experiment did not complete";
  }
  os << "; wall " << int(wall_seconds) << "s of 7200s";
  ok = ok && wall_seconds < 7200.0;
  report(6, "ordering experiment", ok, os.str());
  return ok;
}

bool criterion_determinism(const OrderingOutcome& a, const OrderingOutcome& b) {
  const bool ok = a.ran && b.ran && a.csv == b.csv && a.json == b.json &&
                  !a.csv.empty();
  report(8, "determinism", ok,
         ok ? "two runs produced byte-identical tables"
            : "tables differ between identical runs");
  return ok;
}

// ---- criterion 7: ablation harness -----------------------------------------
bool criterion_ablation_harness() {
  ExperimentConfig cfg = ordering_config();
  // structural check only: micro budget, full grid
  cfg.scenes = 16;
  cfg.test_scenes = 4;
  cfg.image_h = 32;
  cfg.image_w = 64;
  cfg.epochs = 1;
  cfg.variant = "priorlane-kea";
  AblationSpec spec;
  spec.l1 = {2, 4, 8};
  spec.l2 = {2, 4, 8};
  spec.range = {10.0, 20.0, 40.0};
  spec.seeds = {0, 1, 2};
  std::vector<AblationRow> rows = run_ablation(cfg, spec, 2, nullptr);
  bool ok = rows.size() == 27;
  int complete = 0;
  for (const AblationRow& r : rows)
    if (!r.skipped && r.per_seed_miou.size() == 3) ++complete;
  ok = ok && complete == 27;
  const std::string csv = ablation_csv(rows, spec.seeds);
  ok = ok && csv.find("miou_seed0") != std::string::npos &&
       csv.find("miou_seed2") != std::string::npos &&
       csv.find("miou_mean") != std::string::npos;
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  ok = ok && lines == 28;  // header + 27 rows
  std::ostringstream os;
  os << complete << "/27 grid cells completed with per-seed and mean columns";
  report(7, "ablation harness", ok, os.str());
  return ok;
}

}  // namespace

int main() {
  std::printf("PriorLane acceptance suite\n");
  const bool c1 = criterion_gradient_audit();
  const bool c2 = criterion_rotation_invariance();
  const bool c3 = criterion_stn_identity();
  const bool c4 = criterion_attention_contract();
  const bool c5 = criterion_metric_oracles();

  const ExperimentConfig cfg = ordering_config();
  const auto t0 = Clock::now();
  OrderingOutcome first = run_ordering(cfg);
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool c6 = criterion_ordering(first, c2, c3, wall);
  const bool c7 = criterion_ablation_harness();
  OrderingOutcome second = run_ordering(cfg);
  const bool c8 = criterion_determinism(first, second);

  (void)c1;
  (void)c4;
  (void)c5;
  (void)c6;
  (void)c7;
  (void)c8;
  std::printf("%d of 8 criteria passed\n", 8 - failures);
  return failures == 0 ? 0 : 1;
}
