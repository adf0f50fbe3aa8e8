#include "neaw/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "neaw/errors.hpp"
#include "neaw/io_util.hpp"

namespace neaw {

double activity_variance(std::span<const int> winners, int d) {
  if (winners.empty()) throw std::invalid_argument("activity_variance needs winners");
  ActivityState s = make_activity(d);
  record_winners(s, winners);
  return activity_variance(s);
}

double median_of(Vec64 values) {
  if (values.empty()) throw std::invalid_argument("median of empty list");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---------------------------------------------------------------------------
// Activity diagnostics.

ActivityReport activity_report(const EncoderModel& model, const std::vector<PointCloud>& clouds,
                               int num_classes) {
  if (clouds.empty()) throw std::invalid_argument("activity_report needs clouds");
  if (num_classes <= 0) throw std::invalid_argument("num_classes must be positive");
  const int d = model.output_dim();
  const int nlayers = int(model.layers.size());

  EncoderScratch ws;
  ws.refresh(model);
  std::vector<int> winners(size_t(nlayers), 0);
  std::vector<double> values(size_t(nlayers), 0.0);

  std::vector<int64_t> counts(size_t(d), 0);
  Mat64 per_class_counts(num_classes, d);
  std::vector<int64_t> class_points(size_t(num_classes), 0);
  int64_t total = 0;

  for (const PointCloud& c : clouds) {
    if (!c.label || *c.label < 0 || *c.label >= num_classes)
      throw std::invalid_argument("activity_report needs labels in [0, num_classes)");
    for (int p = 0; p < c.size(); ++p) {
      encode_point_ws(model, ws, c.point(p), winners.data(), values.data());
      const int w = winners[size_t(nlayers - 1)];
      ++counts[size_t(w)];
      per_class_counts.at(*c.label, w) += 1.0;
      ++class_points[size_t(*c.label)];
      ++total;
    }
  }

  ActivityReport r;
  r.p.resize(size_t(d));
  ActivityState st = make_activity(d);
  st.counts = counts;
  st.total = total;
  for (int j = 0; j < d; ++j) r.p[size_t(j)] = st.p(j);
  r.variance = activity_variance(st);
  r.per_class = Mat64(num_classes, d);
  r.per_class_total = Mat64(num_classes, d);
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < d; ++j) {
      const double cnt = per_class_counts.at(c, j);
      r.per_class.at(c, j) = class_points[size_t(c)] > 0
                                 ? cnt / double(class_points[size_t(c)])
                                 : 0.0;
      r.per_class_total.at(c, j) = cnt / double(total);
    }
  }
  r.class_points = std::move(class_points);
  return r;
}

// ---------------------------------------------------------------------------
// Geometry checks.

namespace {

void validate_instance(const GeometryInstance& g, double dj, double djp) {
  if (g.x.size() != g.w_j.size() || g.x.size() != g.w_jp.size() || g.x.empty())
    throw std::invalid_argument("geometry instance dimension mismatch");
  if (!(g.eta_over_n > 0.0 && g.eta_over_n < 1.0))
    throw std::invalid_argument("eta/N must be in (0,1)");
  if (!(dj < djp)) throw std::invalid_argument("premise ||x-w_j|| < ||x-w_jp|| violated");
}

// Columns: 0 = w_j (current winner), 1 = w_jp.
WtaLayer instance_layer(const GeometryInstance& g) {
  WtaLayer L{Mat64(int(g.x.size()), 2)};
  L.W.set_col(0, g.w_j);
  L.W.set_col(1, g.w_jp);
  return L;
}

}  // namespace

Theorem1Result theorem1_check(const GeometryInstance& g) {
  const double dj = euclid_dist(g.x, g.w_j);
  const double djp = euclid_dist(g.x, g.w_jp);
  validate_instance(g, dj, djp);

  WtaLayer L = instance_layer(g);
  RuleConfig cfg;  // a = b = 1, as the proofs assume
  cfg.eta = g.eta_over_n;  // single input, so eta/N == eta
  // Column 0 over-active (pushed away), column 1 silent (pulled in).
  ActivityState st = make_activity(2);
  record_winners(st, std::vector<int>{0, 0});
  neaw_update(L, {g.x}, st, cfg);

  const double s = g.eta_over_n;
  Theorem1Result r;
  r.condition = (1.0 + s) * dj > (1.0 - s) * djp;
  r.flipped = euclid_dist(g.x, L.W.col(0)) > euclid_dist(g.x, L.W.col(1));
  return r;
}

bool corollary_check(const GeometryInstance& g, HomogeneousMode mode) {
  const double dj = euclid_dist(g.x, g.w_j);
  const double djp = euclid_dist(g.x, g.w_jp);
  validate_instance(g, dj, djp);

  WtaLayer L = instance_layer(g);
  RuleConfig cfg;
  cfg.kind = mode == HomogeneousMode::BothHebbian ? RuleKind::NeAW_H : RuleKind::NeAW_aH;
  cfg.eta = g.eta_over_n;
  ActivityState st = make_activity(2);
  record_winners(st, std::vector<int>{0, 0});
  neaw_update(L, {g.x}, st, cfg);

  return euclid_dist(g.x, L.W.col(0)) > euclid_dist(g.x, L.W.col(1));
}

GeometryInstance sample_geometry_instance(SeededRng& rng) {
  for (;;) {
    const int dim = 1 + int(rng.next_below(16));
    GeometryInstance g;
    g.x.resize(size_t(dim));
    g.w_j.resize(size_t(dim));
    g.w_jp.resize(size_t(dim));
    for (double& v : g.x) v = rng.next_gaussian();
    for (double& v : g.w_j) v = rng.next_gaussian();
    for (double& v : g.w_jp) v = rng.next_gaussian();
    g.eta_over_n = 0.01 + 0.98 * rng.next_double();
    double dj = euclid_dist(g.x, g.w_j);
    double djp = euclid_dist(g.x, g.w_jp);
    if (dj == djp) continue;
    if (dj > djp) {
      std::swap(g.w_j, g.w_jp);
      std::swap(dj, djp);
    }
    // The theorem is a strict inequality; floating point cannot adjudicate
    // instances sitting on the flip boundary, so those are resampled.
    const double lhs = (1.0 + g.eta_over_n) * dj;
    const double rhs = (1.0 - g.eta_over_n) * djp;
    if (std::abs(lhs - rhs) < 1e-9 * std::max(dj, djp)) continue;
    return g;
  }
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SuiteSummary run_theorem1_suite(int64_t instances, uint64_t seed, bool inject_fault) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteSummary s;
  s.suite = inject_fault ? "theorem1-faulted" : "theorem1";
  s.instances = instances;
  s.seed = seed;
  for (int64_t i = 0; i < instances; ++i) {
    SeededRng rng(derive_seed(seed, "t1-" + std::to_string(i)));
    const GeometryInstance g = sample_geometry_instance(rng);
    bool condition, flipped;
    if (inject_fault) {
      // Fault hook: homogeneous update instead of the biased one, while still
      // predicting with the biased condition. The suite must notice.
      condition = (1.0 + g.eta_over_n) * euclid_dist(g.x, g.w_j) >
                  (1.0 - g.eta_over_n) * euclid_dist(g.x, g.w_jp);
      flipped = corollary_check(g, HomogeneousMode::BothHebbian);
    } else {
      const Theorem1Result r = theorem1_check(g);
      condition = r.condition;
      flipped = r.flipped;
    }
    if (condition != flipped) {
      ++s.violations;
      if (s.first_counterexample.empty())
        s.first_counterexample = "instance " + std::to_string(i) + ": dim=" +
                                 std::to_string(g.x.size()) +
                                 " eta_over_n=" + format_g17(g.eta_over_n) +
                                 " condition=" + std::to_string(condition) +
                                 " flipped=" + std::to_string(flipped);
    }
  }
  s.wall_seconds = seconds_since(t0);
  return s;
}

SuiteSummary run_corollary_suite(HomogeneousMode mode, int64_t instances, uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteSummary s;
  s.suite = mode == HomogeneousMode::BothHebbian ? "corollary-both-hebbian"
                                                 : "corollary-both-anti";
  s.instances = instances;
  s.seed = seed;
  for (int64_t i = 0; i < instances; ++i) {
    SeededRng rng(derive_seed(seed, "cor-" + std::to_string(i)));
    const GeometryInstance g = sample_geometry_instance(rng);
    if (corollary_check(g, mode)) {
      ++s.violations;
      if (s.first_counterexample.empty())
        s.first_counterexample = "instance " + std::to_string(i) + ": dim=" +
                                 std::to_string(g.x.size()) +
                                 " eta_over_n=" + format_g17(g.eta_over_n) + " flipped";
    }
  }
  s.wall_seconds = seconds_since(t0);
  return s;
}

SuiteSummary run_eq5_suite(int64_t lists, uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteSummary s;
  s.suite = "activity-variance-closed-form";
  s.instances = lists;
  s.seed = seed;
  for (int64_t i = 0; i < lists; ++i) {
    SeededRng rng(derive_seed(seed, "eq5-" + std::to_string(i)));
    const int d = 1 + int(rng.next_below(64));
    const int n = 1 + int(rng.next_below(500));
    std::vector<int> winners(static_cast<size_t>(n));
    for (int& w : winners) w = int(rng.next_below(uint64_t(d)));
    const double closed = activity_variance(winners, d);
    // Explicit double sum over one-hot dot products.
    int64_t same = 0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) same += winners[size_t(a)] == winners[size_t(b)];
    const double brute = 1.0 - double(same) / (double(n) * double(n));
    if (std::abs(closed - brute) > 1e-12) {
      ++s.violations;
      if (s.first_counterexample.empty())
        s.first_counterexample = "list " + std::to_string(i) + ": closed=" + format_g17(closed) +
                                 " brute=" + format_g17(brute);
    }
  }
  s.wall_seconds = seconds_since(t0);
  return s;
}

// ---------------------------------------------------------------------------
// Class separation.

DissimilarityMatrix dissimilarity(const std::vector<Vec64>& class_means) {
  const int k = int(class_means.size());
  if (k < 2) throw std::invalid_argument("dissimilarity needs at least two classes");
  const size_t d = class_means[0].size();
  Vec64 norms(size_t(k), 0.0);
  for (int a = 0; a < k; ++a) {
    if (class_means[size_t(a)].size() != d)
      throw std::invalid_argument("class mean width mismatch");
    norms[size_t(a)] = std::sqrt(dot(class_means[size_t(a)], class_means[size_t(a)]));
    if (norms[size_t(a)] == 0.0)
      throw std::invalid_argument("class " + std::to_string(a) + " has a zero-norm mean feature");
  }
  DissimilarityMatrix m;
  m.D = Mat64(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const double cos =
          dot(class_means[size_t(a)], class_means[size_t(b)]) / (norms[size_t(a)] * norms[size_t(b)]);
      // cos may leave [-1,1] by an ulp; keep entries in [0,2]
      const double v = std::min(2.0, std::max(0.0, 1.0 - cos));
      m.D.at(a, b) = v;
      m.D.at(b, a) = v;
    }
  }
  double acc = 0.0;
  for (double v : m.D.data) acc += v * v;
  m.frobenius = std::sqrt(acc);
  return m;
}

std::vector<Vec64> class_mean_features(const Mat64& features, const std::vector<int>& labels,
                                       int num_classes) {
  if (features.rows != int(labels.size()))
    throw std::invalid_argument("feature/label count mismatch");
  if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
  std::vector<Vec64> means(size_t(num_classes), Vec64(size_t(features.cols), 0.0));
  std::vector<int64_t> counts(size_t(num_classes), 0);
  for (int r = 0; r < features.rows; ++r) {
    const int c = labels[size_t(r)];
    if (c < 0 || c >= num_classes) throw std::invalid_argument("label out of range");
    const double* row = features.row(r);
    Vec64& m = means[size_t(c)];
    for (int j = 0; j < features.cols; ++j) m[size_t(j)] += row[j];
    ++counts[size_t(c)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[size_t(c)] == 0)
      throw std::invalid_argument("class " + std::to_string(c) + " has no samples");
    for (double& v : means[size_t(c)]) v /= double(counts[size_t(c)]);
  }
  return means;
}

AblationResult deactivation_ablation(const Mat64& features, const std::vector<int>& labels,
                                     int num_classes, int neuron) {
  if (neuron < 0 || neuron >= features.cols) throw std::out_of_range("neuron out of range");
  std::vector<Vec64> means = class_mean_features(features, labels, num_classes);
  const double before = dissimilarity(means).frobenius;
  for (Vec64& m : means) m[size_t(neuron)] = 0.0;
  const double after = dissimilarity(means).frobenius;

  // Activation share per class: fraction of samples whose pooled feature for
  // this neuron is positive. The reported value is the population variance of
  // those shares across classes.
  Vec64 share(size_t(num_classes), 0.0);
  std::vector<int64_t> counts(size_t(num_classes), 0);
  for (int r = 0; r < features.rows; ++r) {
    const int c = labels[size_t(r)];
    ++counts[size_t(c)];
    if (features.at(r, neuron) > 0.0) share[size_t(c)] += 1.0;
  }
  double mu = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    share[size_t(c)] /= double(counts[size_t(c)]);
    mu += share[size_t(c)];
  }
  mu /= double(num_classes);
  double var = 0.0;
  for (double v : share) var += (v - mu) * (v - mu);
  var /= double(num_classes);

  AblationResult r;
  r.delta_frobenius = after - before;
  r.cross_class_variance = var;
  return r;
}

// ---------------------------------------------------------------------------
// Rule comparison.

std::vector<RuleVarianceSeries> variance_ordering_experiment(
    const std::vector<PointCloud>& clouds, const std::vector<int>& dims, const RuleConfig& base,
    const EncoderTrainOptions& opts, const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 3) throw std::invalid_argument("variance ordering needs >= 3 seeds");
  std::vector<RuleVarianceSeries> out;
  for (uint64_t seed : seeds) {
    const EncoderModel init = make_encoder(dims, derive_seed(seed, "encoder-init"));
    for (RuleKind kind : {RuleKind::NeAW, RuleKind::NeAW_H, RuleKind::NeAW_aH}) {
      EncoderModel model = init;
      RuleConfig cfg = base;
      cfg.kind = kind;
      RuleVarianceSeries series;
      series.rule = kind;
      series.seed = seed;
      series.per_epoch.reserve(size_t(opts.epochs));
      train_encoder(model, clouds, cfg, opts, derive_seed(seed, "train"),
                    [&series](const TelemetryRow& row, const EncoderModel&) {
                      series.per_epoch.push_back(row.layer_variance.back());
                    });
      out.push_back(std::move(series));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV export.

namespace {

std::string join_g17(const double* v, int n) {
  std::string line;
  for (int i = 0; i < n; ++i) {
    if (i) line += ',';
    line += format_g17(v[i]);
  }
  return line;
}

}  // namespace

ExportPaths export_artifacts(const EncoderModel& model, const std::vector<PointCloud>& clouds,
                             int num_classes, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

  ExportPaths paths;
  const Mat64& w = model.layers.back().W;

  // Last-layer weights, one row per input coordinate.
  {
    std::string csv;
    for (int j = 0; j < w.cols; ++j) {
      if (j) csv += ',';
      csv += "c" + std::to_string(j);
    }
    csv += '\n';
    for (int i = 0; i < w.rows; ++i) csv += join_g17(w.row(i), w.cols) + "\n";
    paths.weights_csv = (fs::path(out_dir) / "last_layer_weights.csv").string();
    write_file_atomic(paths.weights_csv, csv);
  }

  // Per-sample pooled features with labels.
  {
    std::string csv = "label";
    for (int j = 0; j < model.output_dim(); ++j) csv += ",f" + std::to_string(j);
    csv += '\n';
    for (const PointCloud& c : clouds) {
      const GlobalFeature f = global_feature(model, c);
      csv += std::to_string(c.label.value_or(-1)) + ',' +
             join_g17(f.values.data(), int(f.values.size())) + "\n";
    }
    paths.features_csv = (fs::path(out_dir) / "global_features.csv").string();
    write_file_atomic(paths.features_csv, csv);
  }

  // Activity matrices and histogram.
  std::string by_class = "class";
  std::string by_total = "class";
  std::string hist = "neuron,count,share\n";
  for (int j = 0; j < model.output_dim(); ++j) {
    by_class += ",n" + std::to_string(j);
    by_total += ",n" + std::to_string(j);
  }
  by_class += '\n';
  by_total += '\n';
  if (!clouds.empty() && num_classes > 0) {
    const ActivityReport rep = activity_report(model, clouds, num_classes);
    for (int c = 0; c < num_classes; ++c) {
      by_class += std::to_string(c) + ',' + join_g17(rep.per_class.row(c), rep.per_class.cols) + "\n";
      by_total +=
          std::to_string(c) + ',' + join_g17(rep.per_class_total.row(c), rep.per_class_total.cols) + "\n";
    }
    int64_t total = 0;
    for (int64_t v : rep.class_points) total += v;
    for (int j = 0; j < model.output_dim(); ++j) {
      const double cnt = rep.p[size_t(j)] * double(total);
      hist += std::to_string(j) + ',' + format_g17(std::round(cnt)) + ',' +
              format_g17(rep.p[size_t(j)]) + "\n";
    }
  }
  paths.activity_by_class_csv = (fs::path(out_dir) / "activity_by_class.csv").string();
  write_file_atomic(paths.activity_by_class_csv, by_class);
  paths.activity_by_total_csv = (fs::path(out_dir) / "activity_by_total.csv").string();
  write_file_atomic(paths.activity_by_total_csv, by_total);
  paths.histogram_csv = (fs::path(out_dir) / "activity_histogram.csv").string();
  write_file_atomic(paths.histogram_csv, hist);
  return paths;
}

}  // namespace neaw
