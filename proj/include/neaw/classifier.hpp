#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "neaw/numerics.hpp"

namespace neaw {

// 3-layer MLP head: fc -> norm -> relu twice, then a linear readout trained
// with softmax cross-entropy. All gradients are computed by hand.

struct DenseLayer {
  Mat64 W;  // d_in x d_out, column per unit
  Vec64 b;
};

struct NormLayer {
  Vec64 gamma;
  Vec64 beta;
};

constexpr double kLayerNormEps = 1e-5;

struct ClassifierModel {
  std::vector<int> dims;  // {d_in, h1, h2, classes}
  DenseLayer fc1, fc2, fc3;
  NormLayer ln1, ln2;
  // true: fc -> norm -> relu (default). false: fc -> relu -> norm.
  bool norm_before_relu = true;

  int input_dim() const { return dims[0]; }
  int num_classes() const { return dims[3]; }
  size_t parameter_count() const;
};

// He-normal weights, zero biases, unit gamma, zero beta.
ClassifierModel make_classifier(const std::vector<int>& dims, uint64_t seed,
                                bool norm_before_relu = true);

// y = gamma * (x - mean) / sqrt(var + eps) + beta, var the biased row variance.
// Optional caches for the backward pass: xhat and 1/sqrt(var + eps).
void layer_norm(std::span<const double> x, const NormLayer& ln, double* out,
                double* xhat = nullptr, double* inv_s = nullptr);

struct ClfGrads {
  Mat64 W1, W2, W3;
  Vec64 b1, b2, b3, g1, be1, g2, be2;
};
ClfGrads make_grads(const ClassifierModel& model);

// Row-per-sample logits for a feature batch.
Mat64 clf_logits(const ClassifierModel& model, const Mat64& X);

// Mean cross-entropy, computed through log-sum-exp.
double clf_loss(const ClassifierModel& model, const Mat64& X, const std::vector<int>& y);

// Mean cross-entropy plus gradients for every tensor. Returns the loss.
double clf_loss_and_grads(const ClassifierModel& model, const Mat64& X,
                          const std::vector<int>& y, ClfGrads& grads);

struct ClassifierTrainOptions {
  int epochs = 100;
  int batch = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool shuffle = true;  // off: fixed order, used by batch-equivalence tests
};

struct ClfEpochRow {
  int epoch = 0;
  double loss = 0.0;  // mean over the epoch's batches
  double wall_seconds = 0.0;
};

std::vector<ClfEpochRow> train_classifier(ClassifierModel& model, const Mat64& X,
                                          const std::vector<int>& y,
                                          const ClassifierTrainOptions& opts, uint64_t seed);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class;  // accuracy per label; NaN-free, 0 when absent
  std::vector<int> class_counts;
  std::vector<int> predictions;
};

// Argmax over logits, lowest index on ties.
EvalResult evaluate_classifier(const ClassifierModel& model, const Mat64& X,
                               const std::vector<int>& y);

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

// Central differences (h = 1e-5) on `per_tensor` randomly chosen entries of
// each tensor; rel err = |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(ClassifierModel& model, const Mat64& X, const std::vector<int>& y,
                           int per_tensor, uint64_t seed);

}  // namespace neaw
