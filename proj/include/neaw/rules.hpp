#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "neaw/encoder.hpp"

namespace neaw {

enum class RuleKind { Hebb, Oja, Grossberg, NeAW, NeAW_H, NeAW_aH };

RuleKind rule_from_name(std::string_view name);
std::string_view rule_name(RuleKind kind);
// NeAW variants update per batch from activity; the others update per point.
bool is_neaw_family(RuleKind kind);

struct RuleConfig {
  RuleKind kind = RuleKind::NeAW;
  double eta = 0.01;
  double a = 1.0;  // Hebbian branch scale
  double b = 1.0;  // anti-Hebbian branch scale
  double activity_epsilon = 0.0;  // |p* - p| <= eps suppresses the update
};

// Winner tallies over some window of point presentations.
struct ActivityState {
  std::vector<int64_t> counts;
  int64_t total = 0;

  int d() const { return int(counts.size()); }
  double p(int j) const { return total > 0 ? double(counts[size_t(j)]) / double(total) : 0.0; }
  double p_star() const { return 1.0 / double(d()); }
};

ActivityState make_activity(int d);
void record_winners(ActivityState& state, std::span<const int> winners);

// 1 - sum_j (c_j / N)^2: maximal when activity is uniform, 0 when one neuron
// wins everything.
double activity_variance(const ActivityState& state);

// Factor applied to (eta/N)(x_k - W_col): +a under-active, -b over-active,
// 0 inside the epsilon band. NeAW_H / NeAW_aH force +1 / -1 regardless.
double neaw_factor(const RuleConfig& cfg, double p_star, double p);

// Batch update: every neuron moves by factor * (eta/N) * (x_k - W_col) where
// x_k is the batch input closest to that neuron's column (lowest index ties)
// and N = inputs.size(). Requires state.total > 0 and state.d() == d_out.
void neaw_update(WtaLayer& layer, const std::vector<Vec64>& inputs, const ActivityState& state,
                 const RuleConfig& cfg);

// Per-point update of the winner column only, with y = value from the frozen
// forward pass: Hebb dW = eta*y*x; Oja dW = eta*y*(x - y*W); Grossberg
// dW = eta*(x - W).
void baseline_update(WtaLayer& layer, const Vec64& x, int winner, double value,
                     const RuleConfig& cfg);

struct EncoderTrainOptions {
  int epochs = 50;
  int batch_clouds = 4;
  // Default: one forward pass per batch, all layers updated from those frozen
  // activations. Greedy recomputes downstream activations after each layer.
  bool greedy_layerwise = false;
  // Smooth activities across batches instead of using the raw batch tallies.
  bool activity_ema = false;
  double ema_decay = 0.9;
  // Restrict NeAW-family updates to the last layer (earlier layers frozen).
  bool last_layer_only = false;
};

// Cross-batch state (EMA activities). Persists across epochs of one run.
struct EncoderTrainState {
  std::vector<Vec64> ema_p;
};

struct EpochStats {
  std::vector<ActivityState> epoch_activity;  // accumulated over the whole epoch
  std::vector<ActivityState> last_batch_activity;
  double mean_col_norm = 0.0;
  double max_col_norm = 0.0;
  double wall_seconds = 0.0;
};

// One pass over the clouds in seeded-shuffled batches. The shuffle stream is
// derived from (seed, epoch_index), so resuming at an epoch boundary
// reproduces an uninterrupted run exactly.
EpochStats train_encoder_epoch(EncoderModel& model, const std::vector<PointCloud>& clouds,
                               const RuleConfig& rule, const EncoderTrainOptions& opts,
                               uint64_t seed, int epoch_index,
                               EncoderTrainState* state = nullptr);

struct TelemetryRow {
  int epoch = 0;
  std::vector<double> layer_variance;  // epoch-accumulated, per layer
  double mean_col_norm = 0.0;
  double max_col_norm = 0.0;
  double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const TelemetryRow&, const EncoderModel&)>;

// Epochs [epoch_begin, epoch_end) of the schedule identified by seed.
std::vector<TelemetryRow> train_encoder_range(EncoderModel& model,
                                              const std::vector<PointCloud>& clouds,
                                              const RuleConfig& rule,
                                              const EncoderTrainOptions& opts, uint64_t seed,
                                              int epoch_begin, int epoch_end,
                                              EncoderTrainState* state = nullptr,
                                              const EpochCallback& on_epoch = {});

std::vector<TelemetryRow> train_encoder(EncoderModel& model,
                                        const std::vector<PointCloud>& clouds,
                                        const RuleConfig& rule, const EncoderTrainOptions& opts,
                                        uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace neaw
