#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neaw/encoder.hpp"
#include "neaw/rules.hpp"

namespace neaw {

// Eq.-5-style dispersion of a winner list: 1 - sum_j (c_j/N)^2.
double activity_variance(std::span<const int> winners, int d);

// Sorted-copy median; even length averages the middle pair.
double median_of(Vec64 values);

// ---------------------------------------------------------------------------
// Last-layer activity diagnostics over a labeled cloud set.

struct ActivityReport {
  Vec64 p;                 // per-neuron winner share over all points; sums to 1
  double variance = 0.0;
  Mat64 per_class;         // class x neuron, row-normalized by class point count
  Mat64 per_class_total;   // class x neuron, normalized by total activations
  std::vector<int64_t> class_points;
};

ActivityReport activity_report(const EncoderModel& model, const std::vector<PointCloud>& clouds,
                               int num_classes);

// ---------------------------------------------------------------------------
// Winner-flip geometry checks. One input x and two columns; the closer column
// w_j is over-active (pushed away), w_jp under-active (pulled in). Updates run
// through the production rule code, never a re-derivation.

struct GeometryInstance {
  Vec64 x, w_j, w_jp;
  double eta_over_n = 0.0;
};

struct Theorem1Result {
  bool condition = false;  // (1+s)*d_j > (1-s)*d_jp
  bool flipped = false;    // post-update winner moved to the other column
};

Theorem1Result theorem1_check(const GeometryInstance& g);

enum class HomogeneousMode { BothHebbian, BothAnti };

// Same-direction update applied to both columns; returns whether the winner
// flipped (the corollaries say it cannot).
bool corollary_check(const GeometryInstance& g, HomogeneousMode mode);

// Random off-boundary instance: dims 1..16, eta/N uniform in (0.01, 0.99),
// gaussian coordinates, premise ||x-w_j|| < ||x-w_jp|| enforced, instances
// within relative 1e-9 of the flip boundary resampled.
GeometryInstance sample_geometry_instance(SeededRng& rng);

struct SuiteSummary {
  std::string suite;
  int64_t instances = 0;
  int64_t violations = 0;
  uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string first_counterexample;  // empty when clean
};

// inject_fault deliberately mis-applies one update so tests can prove the
// suite is able to fail.
SuiteSummary run_theorem1_suite(int64_t instances, uint64_t seed, bool inject_fault = false);
SuiteSummary run_corollary_suite(HomogeneousMode mode, int64_t instances, uint64_t seed);

// Closed form vs the explicit O(N^2) double sum on random winner lists.
SuiteSummary run_eq5_suite(int64_t lists, uint64_t seed);

// ---------------------------------------------------------------------------
// Class-separation diagnostics.

struct DissimilarityMatrix {
  Mat64 D;                 // k x k, D[a][b] = 1 - cos(mean_a, mean_b)
  double frobenius = 0.0;  // l2 norm over all entries
};

// class_means: one mean global-feature vector per class.
DissimilarityMatrix dissimilarity(const std::vector<Vec64>& class_means);

struct AblationResult {
  double delta_frobenius = 0.0;     // frobenius(after zeroing) - frobenius(before)
  double cross_class_variance = 0;  // variance over classes of the neuron's
                                    // activation share (feature > 0 per sample)
};

AblationResult deactivation_ablation(const Mat64& features, const std::vector<int>& labels,
                                     int num_classes, int neuron);

// Per-class mean feature vectors from per-sample rows.
std::vector<Vec64> class_mean_features(const Mat64& features, const std::vector<int>& labels,
                                       int num_classes);

// ---------------------------------------------------------------------------
// Rule-comparison experiment: identical init and schedule per seed, one
// encoder per rule; records the last layer's per-epoch activity variance.

struct RuleVarianceSeries {
  RuleKind rule = RuleKind::NeAW;
  uint64_t seed = 0;
  Vec64 per_epoch;
};

std::vector<RuleVarianceSeries> variance_ordering_experiment(
    const std::vector<PointCloud>& clouds, const std::vector<int>& dims, const RuleConfig& base,
    const EncoderTrainOptions& opts, const std::vector<uint64_t>& seeds);

// ---------------------------------------------------------------------------
// CSV export for external plotting/embedding. 17 significant digits.

struct ExportPaths {
  std::string weights_csv;
  std::string features_csv;
  std::string activity_by_class_csv;
  std::string activity_by_total_csv;
  std::string histogram_csv;
};

ExportPaths export_artifacts(const EncoderModel& model, const std::vector<PointCloud>& clouds,
                             int num_classes, const std::string& out_dir);

}  // namespace neaw
