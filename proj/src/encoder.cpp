#include "neaw/encoder.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace neaw {

std::vector<int> EncoderModel::dims() const {
  std::vector<int> d;
  if (layers.empty()) return d;
  d.push_back(layers.front().d_in());
  for (const auto& l : layers) d.push_back(l.d_out());
  return d;
}

size_t EncoderModel::parameter_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.W.data.size();
  return n;
}

EncoderModel make_encoder(const std::vector<int>& dims, uint64_t seed, double init_std) {
  if (dims.size() < 2) throw std::invalid_argument("make_encoder: need at least two dims");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("make_encoder: dims must be positive");
  SeededRng rng(seed);
  EncoderModel model;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    WtaLayer layer;
    layer.W = Mat64(dims[l], dims[l + 1]);
    for (auto& v : layer.W.data) v = init_std * rng.next_gaussian();
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void init_encoder_from_data(EncoderModel& model, const std::vector<PointCloud>& clouds,
                            uint64_t seed) {
  if (clouds.empty()) throw std::invalid_argument("init_encoder_from_data: no clouds");
  SeededRng rng(seed);
  auto random_point = [&]() -> Vec64 {
    const PointCloud& c = clouds[size_t(rng.next_below(clouds.size()))];
    const auto p = c.point(int(rng.next_below(uint64_t(c.size()))));
    return Vec64(p.begin(), p.end());
  };
  for (size_t l = 0; l < model.layers.size(); ++l) {
    WtaLayer& layer = model.layers[l];
    for (int j = 0; j < layer.d_out(); ++j) {
      Vec64 x = random_point();
      // Forward through the already-initialized prefix to get a live input
      // vector at this depth.
      for (size_t k = 0; k < l; ++k) x = layer_forward(model.layers[k], x).out;
      layer.W.set_col(j, x);
    }
  }
}

namespace detail {

Vec64 column_sqnorms(const Mat64& w) {
  Vec64 colsq(size_t(w.cols), 0.0);
  for (int i = 0; i < w.rows; ++i) {
    const double* row = w.row(i);
    for (int j = 0; j < w.cols; ++j) colsq[size_t(j)] += row[j] * row[j];
  }
  return colsq;
}

namespace {

// Indices 0..d_out-1 as doubles, grown on demand. Converting the loop index
// inside the argmin reduction would put control flow in the loop body and
// block vectorization; reading the index from a table keeps it branch-free.
const double* index_table(int d_out) {
  thread_local Vec64 tab;
  if (int(tab.size()) < d_out) {
    const int old = int(tab.size());
    tab.resize(size_t(d_out));
    for (int j = old; j < d_out; ++j) tab[size_t(j)] = double(j);
  }
  return tab.data();
}

}  // namespace

// Each scan is two vectorized reductions over the same score expression: the
// minimum itself (min carries no rounding, so the reduction tree equals a
// sequential fold), then the least index whose recomputed score equals that
// minimum, which is the lowest-index tie rule. NaN scores never compare less
// or equal, so they are skipped just like in a sequential strict-< scan; if
// every score is NaN nothing matches and index 0 is returned, like that
// scan's untouched initial state. The loops stay free of lambdas and int
// conversions on purpose: either one blocks the vectorizer.

void layer_scan_dense(const Mat64& w, const double* colsq, const double* x, double* dots,
                      int* winner, double* value) {
  const int d_out = w.cols;
  for (int j = 0; j < d_out; ++j) dots[j] = 0.0;
  for (int i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    const double* row = w.row(i);
#pragma omp simd
    for (int j = 0; j < d_out; ++j) dots[j] += xi * row[j];
  }
  double m = std::numeric_limits<double>::infinity();
#pragma omp simd reduction(min : m)
  for (int j = 0; j < d_out; ++j) {
    const double s = colsq[j] - 2.0 * dots[j];
    m = s < m ? s : m;
  }
  const double* jtab = index_table(d_out);
  const double sentinel = double(d_out);
  double idx = sentinel;
#pragma omp simd reduction(min : idx)
  for (int j = 0; j < d_out; ++j) {
    const double dj = colsq[j] - 2.0 * dots[j] == m ? jtab[j] : sentinel;
    idx = dj < idx ? dj : idx;
  }
  const int best = idx < sentinel ? int(idx) : 0;
  *winner = best;
  *value = std::max(0.0, dots[best]);
}

void layer_scan_sparse(const Mat64& w, const double* colsq, int index, double v, int* winner,
                       double* value) {
  const int d_out = w.cols;
  const double* row = w.row(index);
  const double m2v = -2.0 * v;
  double m = std::numeric_limits<double>::infinity();
#pragma omp simd reduction(min : m)
  for (int j = 0; j < d_out; ++j) {
    const double s = colsq[j] + m2v * row[j];
    m = s < m ? s : m;
  }
  const double* jtab = index_table(d_out);
  const double sentinel = double(d_out);
  double idx = sentinel;
#pragma omp simd reduction(min : idx)
  for (int j = 0; j < d_out; ++j) {
    const double dj = colsq[j] + m2v * row[j] == m ? jtab[j] : sentinel;
    idx = dj < idx ? dj : idx;
  }
  const int best = idx < sentinel ? int(idx) : 0;
  *winner = best;
  *value = std::max(0.0, v * row[best]);
}

}  // namespace detail

LayerResult layer_forward(const WtaLayer& layer, const Vec64& x) {
  if (int(x.size()) != layer.d_in()) throw std::invalid_argument("layer_forward: dim mismatch");
  const Vec64 colsq = detail::column_sqnorms(layer.W);
  Vec64 dots(size_t(layer.d_out()));
  LayerResult r;
  detail::layer_scan_dense(layer.W, colsq.data(), x.data(), dots.data(), &r.winner, &r.value);
  r.out.assign(size_t(layer.d_out()), 0.0);
  r.out[size_t(r.winner)] = r.value;
  return r;
}

Vec64 PointCode::final_out() const {
  Vec64 out(size_t(out_dim), 0.0);
  out[size_t(winners.back())] = values.back();
  return out;
}

void EncoderScratch::refresh(const EncoderModel& model) {
  colsq.resize(model.layers.size());
  size_t max_out = 0;
  for (size_t l = 0; l < model.layers.size(); ++l) {
    colsq[l] = detail::column_sqnorms(model.layers[l].W);
    max_out = std::max(max_out, size_t(model.layers[l].d_out()));
  }
  dots.resize(max_out);
}

void encode_point_ws(const EncoderModel& model, EncoderScratch& ws,
                     std::span<const double> point, int* winners, double* values) {
  detail::layer_scan_dense(model.layers[0].W, ws.colsq[0].data(), point.data(),
                           ws.dots.data(), &winners[0], &values[0]);
  for (size_t l = 1; l < model.layers.size(); ++l)
    detail::layer_scan_sparse(model.layers[l].W, ws.colsq[l].data(), winners[l - 1],
                              values[l - 1], &winners[l], &values[l]);
}

PointCode encode_point(const EncoderModel& model, const Vec64& point) {
  if (model.layers.empty()) throw std::invalid_argument("encode_point: empty model");
  if (int(point.size()) != model.input_dim())
    throw std::invalid_argument("encode_point: dim mismatch");
  EncoderScratch ws;
  ws.refresh(model);
  PointCode code;
  code.winners.resize(model.layers.size());
  code.values.resize(model.layers.size());
  code.out_dim = model.output_dim();
  encode_point_ws(model, ws, {point.data(), point.size()}, code.winners.data(),
                  code.values.data());
  return code;
}

GlobalFeature global_feature(const EncoderModel& model, const PointCloud& cloud) {
  if (cloud.size() < 1) throw std::invalid_argument("global_feature: empty cloud");
  if (cloud.dim() != model.input_dim())
    throw std::invalid_argument("global_feature: dim mismatch");
  EncoderScratch ws;
  ws.refresh(model);
  GlobalFeature gf;
  gf.values.assign(size_t(model.output_dim()), 0.0);
  std::vector<int> winners(model.layers.size());
  std::vector<double> values(model.layers.size());
  for (int i = 0; i < cloud.size(); ++i) {
    encode_point_ws(model, ws, cloud.point(i), winners.data(), values.data());
    double& slot = gf.values[size_t(winners.back())];
    slot = std::max(slot, values.back());
  }
  return gf;
}

}  // namespace neaw
