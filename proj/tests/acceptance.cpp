// Acceptance gate. Each criterion prints one [PASS]/[FAIL] line with the
// measured numbers; the exit code is nonzero when any selected criterion
// fails. Run without arguments for the full gate, or pass criterion numbers
// (e.g. ./acceptance 1 2 3) to run a subset.
//
// Thresholds are pinned as constants below, next to the criterion that uses
// them. The two training benches (criteria 4/5 and 6) are full experiments
// and dominate the runtime; progress goes to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neaw/analysis.hpp"
#include "neaw/classifier.hpp"
#include "neaw/data.hpp"
#include "neaw/encoder.hpp"
#include "neaw/numerics.hpp"
#include "neaw/rules.hpp"

namespace {

using namespace neaw;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr uint64_t kMasterSeed = 1;

// Randomized-suite sizes (criteria 1-3).
constexpr int64_t kIffInstances = 100000;
constexpr int64_t kCorollaryInstances = 100000;
constexpr int64_t kEq5Lists = 1000;  // suite tolerance pinned at 1e-12

// Shape bench (criteria 4 and 5): 5 classes, 200 train / 50 test clouds per
// class, 1024 points per cloud, {3,64,128,1024} encoder, 50 epochs of
// 4-cloud batches, 10 seeds with identical init and batch schedule per rule.
constexpr int kShapeTrainPerClass = 200;
constexpr int kShapeTestPerClass = 50;
constexpr int kShapePoints = 1024;
constexpr double kShapeJitter = 0.02;
constexpr int kShapeSeeds = 10;
constexpr int kEpochs = 50;
constexpr int kBatchClouds = 4;

// Activity-aware updates scale by eta/N with N the merged batch size
// (4096 points here), so eta must be O(10) for columns to move at all
// within 50 epochs. Baselines update per point and keep the 0.01 default.
constexpr double kNeawEtaShapes = 40.0;
constexpr double kNeawEtaDigits = 10.0;
constexpr double kBaselineEta = 0.01;
constexpr bool kNeawEma = false;  // raw batch tallies

// Criterion 5 gates.
constexpr double kAccFloor = 0.85;
constexpr double kAccGap = 0.10;
constexpr int kSeedWins = 8;

// Digit bench (criterion 6): 10 classes, 200 train / 50 test clouds per
// class (2000/500 stratified), at most 256 points, 2-D input, 5 seeds.
constexpr int kDigitTrainPerClass = 200;
constexpr int kDigitTestPerClass = 50;
constexpr int kDigitMaxPoints = 256;
constexpr int kDigitSeeds = 5;
constexpr double kDigitFloor = 0.80;
constexpr double kDigitGap = 0.10;

// Criterion 7 gate.
constexpr double kGradTol = 1e-4;

// Criterion 10 gate: within 10% of 0.81M parameters.
constexpr double kParamTarget = 810000.0;
constexpr double kParamSlack = 0.10;

std::string fmt(const char* f, ...) {
  va_list ap;
  va_start(ap, f);
  char buf[512];
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Shared experiment machinery.

std::vector<int> cloud_labels(const std::vector<PointCloud>& clouds) {
  std::vector<int> y;
  y.reserve(clouds.size());
  for (const PointCloud& c : clouds) y.push_back(c.label.value());
  return y;
}

Mat64 feature_rows(const EncoderModel& enc, const std::vector<PointCloud>& clouds) {
  Mat64 x(int(clouds.size()), enc.output_dim());
  for (size_t i = 0; i < clouds.size(); ++i) {
    const GlobalFeature g = global_feature(enc, clouds[i]);
    std::copy(g.values.begin(), g.values.end(), x.row(int(i)));
  }
  return x;
}

RuleConfig rule_for(RuleKind kind, double neaw_eta) {
  RuleConfig r;
  r.kind = kind;
  r.eta = is_neaw_family(kind) ? neaw_eta : kBaselineEta;
  return r;
}

EncoderTrainOptions bench_options() {
  EncoderTrainOptions o;
  o.epochs = kEpochs;
  o.batch_clouds = kBatchClouds;
  o.activity_ema = kNeawEma;
  return o;
}

// Trains a copy of `init` under one rule; returns the model, with the final
// last-layer activity variance in *final_variance.
EncoderModel train_one(const EncoderModel& init, RuleKind kind, double neaw_eta,
                       const std::vector<PointCloud>& clouds, uint64_t seed,
                       double* final_variance) {
  EncoderModel model = init;
  const std::vector<TelemetryRow> rows = train_encoder(
      model, clouds, rule_for(kind, neaw_eta), bench_options(), derive_seed(seed, "train"));
  *final_variance = rows.back().layer_variance.back();
  return model;
}

// Freshly trained head (defaults: 100 epochs, batch 32, lr 1e-3) on the
// frozen encoder's global features; returns test accuracy.
double classify_one(const EncoderModel& model, const DatasetSplit& train, const DatasetSplit& test,
                    uint64_t seed) {
  const Mat64 xtr = feature_rows(model, train.clouds);
  const Mat64 xte = feature_rows(model, test.clouds);
  ClassifierModel clf = make_classifier({model.output_dim(), 512, 256, train.num_classes()},
                                        derive_seed(seed, "clf-init"));
  ClassifierTrainOptions copts;
  train_classifier(clf, xtr, cloud_labels(train.clouds), copts, derive_seed(seed, "clf-train"));
  return evaluate_classifier(clf, xte, cloud_labels(test.clouds)).accuracy;
}

struct ShapeBench {
  Vec64 var_neaw, var_h, var_ah;                 // final variance per seed
  Vec64 acc_neaw, acc_hebb, acc_oja, acc_gross;  // test accuracy per seed
  double variance_seconds = 0.0;  // data + the three activity-aware rules
  double total_seconds = 0.0;
};

std::optional<ShapeBench> g_shapes;
bool g_shapes_has_acc = false;

const ShapeBench& shape_bench(bool want_accuracy) {
  if (g_shapes && (g_shapes_has_acc || !want_accuracy)) return *g_shapes;
  const auto t0 = Clock::now();
  ShapeBench b;
  const DatasetSplit train =
      make_shape_dataset(kShapeTrainPerClass, kShapePoints, kShapeJitter,
                         derive_seed(kMasterSeed, "shape-train"), "shape-train");
  const DatasetSplit test =
      make_shape_dataset(kShapeTestPerClass, kShapePoints, kShapeJitter,
                         derive_seed(kMasterSeed, "shape-test"), "shape-test");
  const double gen_seconds = seconds_since(t0);
  double neaw_family_seconds = 0.0;
  for (int s = 0; s < kShapeSeeds; ++s) {
    const uint64_t seed = derive_seed(kMasterSeed, "shape-seed-" + std::to_string(s));
    EncoderModel init = make_encoder({3, 64, 128, 1024}, derive_seed(seed, "init"));
    init_encoder_from_data(init, train.clouds, derive_seed(seed, "init-cols"));

    double v_neaw = 0.0, v_h = 0.0, v_ah = 0.0;
    const auto tv = Clock::now();
    const EncoderModel m_neaw =
        train_one(init, RuleKind::NeAW, kNeawEtaShapes, train.clouds, seed, &v_neaw);
    train_one(init, RuleKind::NeAW_H, kNeawEtaShapes, train.clouds, seed, &v_h);
    train_one(init, RuleKind::NeAW_aH, kNeawEtaShapes, train.clouds, seed, &v_ah);
    neaw_family_seconds += seconds_since(tv);
    b.var_neaw.push_back(v_neaw);
    b.var_h.push_back(v_h);
    b.var_ah.push_back(v_ah);
    fprintf(stderr, "  [shapes %d/%d] final variance neaw=%.4f h=%.4f ah=%.4f\n", s + 1,
            kShapeSeeds, v_neaw, v_h, v_ah);

    if (want_accuracy) {
      double unused = 0.0;
      b.acc_neaw.push_back(classify_one(m_neaw, train, test, seed));
      b.acc_hebb.push_back(classify_one(
          train_one(init, RuleKind::Hebb, 0.0, train.clouds, seed, &unused), train, test, seed));
      b.acc_oja.push_back(classify_one(
          train_one(init, RuleKind::Oja, 0.0, train.clouds, seed, &unused), train, test, seed));
      b.acc_gross.push_back(
          classify_one(train_one(init, RuleKind::Grossberg, 0.0, train.clouds, seed, &unused),
                       train, test, seed));
      fprintf(stderr, "  [shapes %d/%d] accuracy neaw=%.3f hebb=%.3f oja=%.3f grossberg=%.3f\n",
              s + 1, kShapeSeeds, b.acc_neaw.back(), b.acc_hebb.back(), b.acc_oja.back(),
              b.acc_gross.back());
    }
  }
  b.variance_seconds = gen_seconds + neaw_family_seconds;
  b.total_seconds = seconds_since(t0);
  g_shapes = std::move(b);
  g_shapes_has_acc = want_accuracy;
  return *g_shapes;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome criterion_iff() {
  const SuiteSummary s = run_theorem1_suite(kIffInstances, derive_seed(kMasterSeed, "acc-iff"));
  Outcome o;
  o.pass = s.violations == 0;
  o.detail = fmt("%lld instances, %lld violations, %.1f s", (long long)s.instances,
                 (long long)s.violations, s.wall_seconds);
  if (!s.first_counterexample.empty()) o.detail += "; first: " + s.first_counterexample;
  return o;
}

Outcome criterion_corollaries() {
  const SuiteSummary h = run_corollary_suite(HomogeneousMode::BothHebbian, kCorollaryInstances,
                                             derive_seed(kMasterSeed, "acc-cor-h"));
  const SuiteSummary a = run_corollary_suite(HomogeneousMode::BothAnti, kCorollaryInstances,
                                             derive_seed(kMasterSeed, "acc-cor-a"));
  Outcome o;
  o.pass = h.violations == 0 && a.violations == 0;
  o.detail = fmt("hebbian %lld/%lld clean (%.1f s), anti %lld/%lld clean (%.1f s)",
                 (long long)(h.instances - h.violations), (long long)h.instances, h.wall_seconds,
                 (long long)(a.instances - a.violations), (long long)a.instances, a.wall_seconds);
  return o;
}

Outcome criterion_count_variance() {
  const SuiteSummary s = run_eq5_suite(kEq5Lists, derive_seed(kMasterSeed, "acc-eq5"));
  Outcome o;
  o.pass = s.violations == 0;
  o.detail = fmt("%lld lists vs O(N^2) oracle within 1e-12, %lld violations",
                 (long long)s.instances, (long long)s.violations);
  return o;
}

Outcome criterion_variance_ordering(bool want_accuracy) {
  const ShapeBench& b = shape_bench(want_accuracy);
  const double mn = median_of(b.var_neaw), mh = median_of(b.var_h), ma = median_of(b.var_ah);
  Outcome o;
  o.pass = mn > mh && mn > ma;
  o.detail = fmt("median final variance %.4f vs hebbian-only %.4f, anti-only %.4f "
                 "(%d seeds, %.0f s)",
                 mn, mh, ma, kShapeSeeds, b.variance_seconds);
  return o;
}

Outcome criterion_rule_accuracy() {
  const ShapeBench& b = shape_bench(true);
  int wins = 0;
  for (int s = 0; s < kShapeSeeds; ++s) {
    const double n = b.acc_neaw[size_t(s)];
    const bool ok = n >= kAccFloor && n - b.acc_hebb[size_t(s)] >= kAccGap &&
                    n - b.acc_oja[size_t(s)] >= kAccGap && n - b.acc_gross[size_t(s)] >= kAccGap;
    wins += ok ? 1 : 0;
  }
  Outcome o;
  o.pass = wins >= kSeedWins;
  o.detail = fmt("%d/%d seeds with accuracy >= %.2f and +%.2f over every baseline "
                 "(median acc %.3f vs %.3f/%.3f/%.3f)",
                 wins, kShapeSeeds, kAccFloor, kAccGap, median_of(b.acc_neaw),
                 median_of(b.acc_hebb), median_of(b.acc_oja), median_of(b.acc_gross));
  return o;
}

Outcome criterion_digits() {
  const auto t0 = Clock::now();
  const DatasetSplit train = make_digit_dataset(kDigitTrainPerClass, kDigitMaxPoints,
                                                derive_seed(kMasterSeed, "digit-train"),
                                                "digit-train");
  const DatasetSplit test = make_digit_dataset(kDigitTestPerClass, kDigitMaxPoints,
                                               derive_seed(kMasterSeed, "digit-test"),
                                               "digit-test");
  Vec64 acc_neaw, acc_hebb, acc_oja, acc_gross;
  for (int s = 0; s < kDigitSeeds; ++s) {
    const uint64_t seed = derive_seed(kMasterSeed, "digit-seed-" + std::to_string(s));
    EncoderModel init = make_encoder({2, 64, 128, 1024}, derive_seed(seed, "init"));
    init_encoder_from_data(init, train.clouds, derive_seed(seed, "init-cols"));
    double unused = 0.0;
    acc_neaw.push_back(classify_one(
        train_one(init, RuleKind::NeAW, kNeawEtaDigits, train.clouds, seed, &unused), train,
        test, seed));
    acc_hebb.push_back(classify_one(
        train_one(init, RuleKind::Hebb, 0.0, train.clouds, seed, &unused), train, test, seed));
    acc_oja.push_back(classify_one(
        train_one(init, RuleKind::Oja, 0.0, train.clouds, seed, &unused), train, test, seed));
    acc_gross.push_back(classify_one(
        train_one(init, RuleKind::Grossberg, 0.0, train.clouds, seed, &unused), train, test,
        seed));
    fprintf(stderr, "  [digits %d/%d] accuracy neaw=%.3f hebb=%.3f oja=%.3f grossberg=%.3f\n",
            s + 1, kDigitSeeds, acc_neaw.back(), acc_hebb.back(), acc_oja.back(),
            acc_gross.back());
  }
  const double mn = median_of(acc_neaw);
  const double mh = median_of(acc_hebb), mo = median_of(acc_oja), mg = median_of(acc_gross);
  Outcome o;
  o.pass = mn >= kDigitFloor && mn - mh >= kDigitGap && mn - mo >= kDigitGap &&
           mn - mg >= kDigitGap;
  o.detail = fmt("median accuracy %.3f vs hebb %.3f, oja %.3f, grossberg %.3f "
                 "(%d seeds, %.0f s)",
                 mn, mh, mo, mg, kDigitSeeds, seconds_since(t0));
  return o;
}

Outcome criterion_grad_check() {
  double worst = 0.0;
  int checked = 0;
  for (int i = 0; i < 10; ++i) {
    SeededRng rng(derive_seed(kMasterSeed, "gradcheck-" + std::to_string(i)));
    const int d_in = 8 + int(rng.next_below(16));
    const int h1 = 8 + int(rng.next_below(16));
    const int h2 = 4 + int(rng.next_below(12));
    const int k = 2 + int(rng.next_below(8));
    ClassifierModel m = make_classifier({d_in, h1, h2, k},
                                        derive_seed(kMasterSeed, "gradmodel-" + std::to_string(i)),
                                        i % 2 == 0);
    Mat64 x(1, d_in);
    for (int c = 0; c < d_in; ++c) x.at(0, c) = rng.next_gaussian();
    const std::vector<int> y = {int(rng.next_below(uint64_t(k)))};
    const GradCheckResult r =
        grad_check(m, x, y, 4, derive_seed(kMasterSeed, "gradpick-" + std::to_string(i)));
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
  }
  Outcome o;
  o.pass = worst < kGradTol;
  o.detail = fmt("max relative error %.3g over %d entries in 10 model/sample pairs (tol %g)",
                 worst, checked, kGradTol);
  return o;
}

Outcome criterion_permutation() {
  const EncoderModel enc = make_encoder({3, 64, 128, 1024}, derive_seed(kMasterSeed, "perm-enc"));
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    SeededRng rng(derive_seed(kMasterSeed, "perm-" + std::to_string(i)));
    const int n = 32 + int(rng.next_below(225));
    PointCloud c;
    c.points = Mat64(n, 3);
    for (double& v : c.points.data) v = rng.next_gaussian();
    const GlobalFeature a = global_feature(enc, c);

    std::vector<int> idx(static_cast<size_t>(n));
    for (int p = 0; p < n; ++p) idx[size_t(p)] = p;
    shuffle_indices(idx, rng);
    PointCloud perm;
    perm.points = Mat64(n, 3);
    for (int p = 0; p < n; ++p)
      std::memcpy(perm.points.row(p), c.points.row(idx[size_t(p)]), sizeof(double) * 3);
    const GlobalFeature bfeat = global_feature(enc, perm);

    const bool same = a.values.size() == bfeat.values.size() &&
                      std::memcmp(a.values.data(), bfeat.values.data(),
                                  a.values.size() * sizeof(double)) == 0;
    identical += same ? 1 : 0;
  }
  Outcome o;
  o.pass = identical == 100;
  o.detail = fmt("%d/100 clouds bit-identical under random permutation", identical);
  return o;
}

Outcome criterion_fixed_point() {
  // Engineered batch: d = 8 columns, 3 exact copies of each column as input,
  // so every neuron wins exactly its own copies and p = 3/24 = 1/8 = p*.
  const int dout = 8, copies = 3;
  EncoderModel tmp = make_encoder({5, dout}, derive_seed(kMasterSeed, "fixed-point"));
  WtaLayer layer = tmp.layers[0];
  std::vector<Vec64> inputs;
  std::vector<int> winners;
  for (int j = 0; j < dout; ++j) {
    for (int c = 0; c < copies; ++c) {
      inputs.push_back(layer.W.col(j));
      winners.push_back(j);
    }
  }
  bool wta_consistent = true;
  for (size_t i = 0; i < inputs.size(); ++i)
    wta_consistent = wta_consistent && layer_forward(layer, inputs[i]).winner == winners[i];
  ActivityState st = make_activity(dout);
  record_winners(st, winners);
  bool exact = true;
  for (int j = 0; j < dout; ++j) exact = exact && st.p(j) == st.p_star();

  RuleConfig cfg;
  cfg.kind = RuleKind::NeAW;
  cfg.eta = 0.7;
  const Mat64 before = layer.W;
  neaw_update(layer, inputs, st, cfg);
  const bool unchanged = std::memcmp(before.data.data(), layer.W.data.data(),
                                     before.data.size() * sizeof(double)) == 0;
  Outcome o;
  o.pass = wta_consistent && exact && unchanged;
  o.detail = fmt("winners self-consistent=%d, activities exactly 1/d=%d, layer bytes unchanged=%d",
                 int(wta_consistent), int(exact), int(unchanged));
  return o;
}

Outcome criterion_parameter_budget() {
  const EncoderModel enc = make_encoder({3, 64, 128, 1024}, 1);
  const ClassifierModel clf = make_classifier({1024, 512, 256, 5}, 1);
  const double total = double(enc.parameter_count() + clf.parameter_count());
  Outcome o;
  o.pass = std::fabs(total - kParamTarget) <= kParamSlack * kParamTarget;
  o.detail = fmt("%.0f parameters (%.0f encoder + %.0f head), %.2f MB fp32, target 0.81M +/- 10%%",
                 total, double(enc.parameter_count()), double(clf.parameter_count()),
                 total * 4.0 / (1024.0 * 1024.0));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> want;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > 10) {
      fprintf(stderr, "usage: %s [criterion numbers 1-10]\n", argv[0]);
      return 2;
    }
    want.push_back(id);
  }
  if (want.empty())
    for (int id = 1; id <= 10; ++id) want.push_back(id);
  const bool want_acc =
      std::find(want.begin(), want.end(), 5) != want.end();

  struct Row {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Row> rows = {
      {1, "boundary-flip iff", criterion_iff},
      {2, "homogeneous rules never flip", criterion_corollaries},
      {3, "count-variance closed form", criterion_count_variance},
      {4, "activity-variance ordering", [&] { return criterion_variance_ordering(want_acc); }},
      {5, "rule-comparison accuracy", criterion_rule_accuracy},
      {6, "digit-subset accuracy", criterion_digits},
      {7, "classifier gradient check", criterion_grad_check},
      {8, "permutation invariance", criterion_permutation},
      {9, "balanced-activity fixed point", criterion_fixed_point},
      {10, "parameter budget", criterion_parameter_budget},
  };

  int passed = 0, ran = 0;
  for (const Row& row : rows) {
    if (std::find(want.begin(), want.end(), row.id) == want.end()) continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = row.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    passed += o.pass ? 1 : 0;
    printf("[%s] %2d %-32s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", row.id, row.name,
           o.detail.c_str(), seconds_since(t0));
    fflush(stdout);
  }
  printf("acceptance: %d/%d criteria passed\n", passed, ran);
  return passed == ran ? 0 : 1;
}
