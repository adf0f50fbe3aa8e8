#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "neaw/data.hpp"
#include "neaw/numerics.hpp"

namespace neaw {

// One competitive layer: d_in x d_out weights, column j = neuron j.
struct WtaLayer {
  Mat64 W;

  int d_in() const { return W.rows; }
  int d_out() const { return W.cols; }
};

struct EncoderModel {
  std::vector<WtaLayer> layers;

  int input_dim() const { return layers.front().d_in(); }
  int output_dim() const { return layers.back().d_out(); }
  std::vector<int> dims() const;
  size_t parameter_count() const;
};

// dims = {d_in, hidden..., d_out}; i.i.d. Gaussian(0, init_std^2) weights.
EncoderModel make_encoder(const std::vector<int>& dims, uint64_t seed, double init_std = 0.5);

// Alternative init: every column is copied from a live input vector at that
// depth (random point forwarded through the already-initialized prefix).
void init_encoder_from_data(EncoderModel& model, const std::vector<PointCloud>& clouds,
                            uint64_t seed);

struct LayerResult {
  int winner = -1;
  double value = 0.0;  // relu of the winner dot product
  Vec64 out;           // dense: zeros except out[winner] = value
};

// Winner = argmin_j ||x - W_col_j|| (lowest index on ties); the carried value
// is max(0, W_col_winner . x). The winner is recorded even when the value is 0.
LayerResult layer_forward(const WtaLayer& layer, const Vec64& x);

// Per-layer winners and carried values for one input point.
struct PointCode {
  std::vector<int> winners;
  std::vector<double> values;
  int out_dim = 0;

  Vec64 final_out() const;
};

PointCode encode_point(const EncoderModel& model, const Vec64& point);

struct GlobalFeature {
  Vec64 values;
};

// Coordinate-wise max over the per-point codes of the last layer. Max is
// commutative and associative, so the result is independent of point order.
GlobalFeature global_feature(const EncoderModel& model, const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Shared scoring kernel. Winner selection compares colsq_j - 2 * (x . W_col_j),
// which orders columns exactly like squared distance (the per-point ||x||^2
// term is constant). All forward paths go through these two scans so the
// reference ops and the batched training loop agree bit-for-bit.

namespace detail {

Vec64 column_sqnorms(const Mat64& w);

// Dense input of length d_in. dots must have room for d_out entries.
void layer_scan_dense(const Mat64& w, const double* colsq, const double* x, double* dots,
                      int* winner, double* value);

// One-hot input: value v at coordinate index.
void layer_scan_sparse(const Mat64& w, const double* colsq, int index, double v, int* winner,
                       double* value);

}  // namespace detail

// Cached column norms + scratch reused across points; refresh() after any
// weight change.
struct EncoderScratch {
  std::vector<Vec64> colsq;
  Vec64 dots;

  void refresh(const EncoderModel& model);
};

// Fast path used by training/eval loops; writes one winner and value per
// layer. Bit-identical to encode_point.
void encode_point_ws(const EncoderModel& model, EncoderScratch& ws,
                     std::span<const double> point, int* winners, double* values);

}  // namespace neaw
