#include "neaw/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace neaw {

size_t ClassifierModel::parameter_count() const {
  return fc1.W.data.size() + fc1.b.size() + ln1.gamma.size() + ln1.beta.size() +
         fc2.W.data.size() + fc2.b.size() + ln2.gamma.size() + ln2.beta.size() +
         fc3.W.data.size() + fc3.b.size();
}

ClassifierModel make_classifier(const std::vector<int>& dims, uint64_t seed,
                                bool norm_before_relu) {
  if (dims.size() != 4) throw std::invalid_argument("classifier needs {in, h1, h2, classes}");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("classifier dims must be positive");
  ClassifierModel m;
  m.dims = dims;
  m.norm_before_relu = norm_before_relu;
  SeededRng rng(seed);
  const auto init_fc = [&rng](DenseLayer& fc, int din, int dout) {
    fc.W = Mat64(din, dout);
    const double std_w = std::sqrt(2.0 / double(din));
    for (double& w : fc.W.data) w = std_w * rng.next_gaussian();
    fc.b.assign(size_t(dout), 0.0);
  };
  init_fc(m.fc1, dims[0], dims[1]);
  m.ln1.gamma.assign(size_t(dims[1]), 1.0);
  m.ln1.beta.assign(size_t(dims[1]), 0.0);
  init_fc(m.fc2, dims[1], dims[2]);
  m.ln2.gamma.assign(size_t(dims[2]), 1.0);
  m.ln2.beta.assign(size_t(dims[2]), 0.0);
  init_fc(m.fc3, dims[2], dims[3]);
  return m;
}

void layer_norm(std::span<const double> x, const NormLayer& ln, double* out, double* xhat,
                double* inv_s) {
  const size_t h = x.size();
  if (h == 0 || ln.gamma.size() != h || ln.beta.size() != h)
    throw std::invalid_argument("layer_norm size mismatch");
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= double(h);
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= double(h);
  const double s = 1.0 / std::sqrt(var + kLayerNormEps);
  for (size_t i = 0; i < h; ++i) {
    const double xh = (x[i] - mu) * s;
    if (xhat) xhat[i] = xh;
    out[i] = ln.gamma[i] * xh + ln.beta[i];
  }
  if (inv_s) *inv_s = s;
}

ClfGrads make_grads(const ClassifierModel& m) {
  ClfGrads g;
  g.W1 = Mat64(m.fc1.W.rows, m.fc1.W.cols);
  g.W2 = Mat64(m.fc2.W.rows, m.fc2.W.cols);
  g.W3 = Mat64(m.fc3.W.rows, m.fc3.W.cols);
  g.b1.assign(m.fc1.b.size(), 0.0);
  g.b2.assign(m.fc2.b.size(), 0.0);
  g.b3.assign(m.fc3.b.size(), 0.0);
  g.g1.assign(m.ln1.gamma.size(), 0.0);
  g.be1.assign(m.ln1.beta.size(), 0.0);
  g.g2.assign(m.ln2.gamma.size(), 0.0);
  g.be2.assign(m.ln2.beta.size(), 0.0);
  return g;
}

namespace {

void check_batch(const ClassifierModel& m, const Mat64& X, const std::vector<int>* y) {
  if (X.cols != m.input_dim()) throw std::invalid_argument("feature width mismatch");
  if (X.rows <= 0) throw std::invalid_argument("empty batch");
  if (y) {
    if (int(y->size()) != X.rows) throw std::invalid_argument("label count mismatch");
    for (int v : *y)
      if (v < 0 || v >= m.num_classes()) throw std::invalid_argument("label out of range");
  }
}

// Column blocking keeps each weight block cache-resident across the whole
// batch instead of streaming the full matrix once per sample. Every output
// still accumulates its terms in ascending-i order, so results match the
// naive per-sample loop bit-for-bit.
constexpr int kColTile = 128;

void fc_forward(const DenseLayer& fc, const Mat64& in, Mat64& out) {
  const int n = in.rows, din = fc.W.rows, dout = fc.W.cols;
  out = Mat64(n, dout);
  const double* bias = fc.b.data();
  for (int b = 0; b < n; ++b) {
    double* o = out.row(b);
#pragma omp simd
    for (int j = 0; j < dout; ++j) o[j] = bias[j];
  }
  Mat64 xt(din, n);  // transposed batch: per-feature loads become contiguous
  for (int b = 0; b < n; ++b) {
    const double* x = in.row(b);
    for (int i = 0; i < din; ++i) xt.row(i)[b] = x[i];
  }
  for (int j0 = 0; j0 < dout; j0 += kColTile) {
    const int jn = std::min(kColTile, dout - j0);
    for (int i = 0; i < din; ++i) {
      const double* w = fc.W.row(i) + j0;
      const double* xr = xt.row(i);
      for (int b = 0; b < n; ++b) {
        const double xi = xr[b];
        double* o = out.row(b) + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) o[j] += xi * w[j];
      }
    }
  }
}

// One fc -> norm -> relu (or fc -> relu -> norm) block.
// relu_in records the vector the relu saw, xh/s the normalization caches.
struct BlockCache {
  Mat64 a;        // fc output
  Mat64 relu_in;  // input of the relu
  Mat64 xh;       // normalized coordinates
  Vec64 s;        // 1/sqrt(var + eps) per row
  Mat64 out;
};

void block_forward(bool norm_first, const DenseLayer& fc, const NormLayer& ln, const Mat64& in,
                   BlockCache& c) {
  fc_forward(fc, in, c.a);
  const int n = c.a.rows, h = c.a.cols;
  c.relu_in = Mat64(n, h);
  c.xh = Mat64(n, h);
  c.s.assign(size_t(n), 0.0);
  c.out = Mat64(n, h);
  Vec64 r(size_t(h), 0.0);
  for (int b = 0; b < n; ++b) {
    const double* a = c.a.row(b);
    double* o = c.out.row(b);
    if (norm_first) {
      layer_norm({a, size_t(h)}, ln, c.relu_in.row(b), c.xh.row(b), &c.s[size_t(b)]);
      const double* l = c.relu_in.row(b);
      for (int j = 0; j < h; ++j) o[j] = std::max(0.0, l[j]);
    } else {
      double* ri = c.relu_in.row(b);
      for (int j = 0; j < h; ++j) {
        ri[j] = a[j];
        r[size_t(j)] = std::max(0.0, a[j]);
      }
      layer_norm({r.data(), size_t(h)}, ln, o, c.xh.row(b), &c.s[size_t(b)]);
    }
  }
}

// dx = s * (h - mean(h) - xh * mean(h .* xh)), h = gamma .* g.
void ln_backward_row(const double* g, const double* xh, double s, const Vec64& gamma, int h,
                     double* dx, Vec64& dgamma, Vec64& dbeta) {
  double mh = 0.0, mhx = 0.0;
  for (int j = 0; j < h; ++j) {
    const double hj = gamma[size_t(j)] * g[j];
    mh += hj;
    mhx += hj * xh[j];
  }
  mh /= double(h);
  mhx /= double(h);
  for (int j = 0; j < h; ++j) {
    const double hj = gamma[size_t(j)] * g[j];
    dx[j] = s * (hj - mh - xh[j] * mhx);
    dgamma[size_t(j)] += g[j] * xh[j];
    dbeta[size_t(j)] += g[j];
  }
}

// d_out -> da (gradient at the fc output), accumulating norm-param grads.
void block_backward(bool norm_first, const NormLayer& ln, const BlockCache& c, const Mat64& d_out,
                    Vec64& dgamma, Vec64& dbeta, Mat64& da) {
  const int n = c.a.rows, h = c.a.cols;
  da = Mat64(n, h);
  Vec64 tmp(size_t(h), 0.0);
  for (int b = 0; b < n; ++b) {
    const double* g = d_out.row(b);
    const double* ri = c.relu_in.row(b);
    if (norm_first) {
      // relu backward, then norm backward
      for (int j = 0; j < h; ++j) tmp[size_t(j)] = ri[j] > 0.0 ? g[j] : 0.0;
      ln_backward_row(tmp.data(), c.xh.row(b), c.s[size_t(b)], ln.gamma, h, da.row(b), dgamma,
                      dbeta);
    } else {
      // norm backward, then relu backward
      ln_backward_row(g, c.xh.row(b), c.s[size_t(b)], ln.gamma, h, tmp.data(), dgamma, dbeta);
      double* d = da.row(b);
      for (int j = 0; j < h; ++j) d[j] = ri[j] > 0.0 ? tmp[size_t(j)] : 0.0;
    }
  }
}

void fc_backward(const DenseLayer& fc, const Mat64& in, const Mat64& d_out, Mat64& dW, Vec64& db,
                 Mat64* d_in) {
  const int n = in.rows, din = fc.W.rows, dout = fc.W.cols;
  if (d_in) *d_in = Mat64(n, din);
  for (int b = 0; b < n; ++b) {
    const double* x = in.row(b);
    const double* g = d_out.row(b);
    for (int j = 0; j < dout; ++j) db[size_t(j)] += g[j];
    for (int i = 0; i < din; ++i) {
      const double xi = x[i];
      double* dwr = dW.row(i);
      for (int j = 0; j < dout; ++j) dwr[j] += xi * g[j];
    }
    if (d_in) {
      double* dx = d_in->row(b);
      for (int i = 0; i < din; ++i) {
        const double* w = fc.W.row(i);
        // Eight partial sums break the add dependency chain; the combine
        // order is fixed, so runs of the same build stay deterministic.
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        double a4 = 0.0, a5 = 0.0, a6 = 0.0, a7 = 0.0;
        int j = 0;
        for (; j + 8 <= dout; j += 8) {
          a0 += w[j] * g[j];
          a1 += w[j + 1] * g[j + 1];
          a2 += w[j + 2] * g[j + 2];
          a3 += w[j + 3] * g[j + 3];
          a4 += w[j + 4] * g[j + 4];
          a5 += w[j + 5] * g[j + 5];
          a6 += w[j + 6] * g[j + 6];
          a7 += w[j + 7] * g[j + 7];
        }
        double acc = ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7));
        for (; j < dout; ++j) acc += w[j] * g[j];
        dx[i] = acc;
      }
    }
  }
}

// Mean cross-entropy through log-sum-exp; optional d(loss)/d(logits).
double softmax_ce(const Mat64& logits, const std::vector<int>& y, Mat64* dlog) {
  const int n = logits.rows, k = logits.cols;
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const double* l = logits.row(b);
    double mx = l[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, l[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(l[j] - mx);
    loss += (mx + std::log(z)) - l[y[size_t(b)]];
    if (dlog) {
      double* d = dlog->row(b);
      for (int j = 0; j < k; ++j) d[j] = std::exp(l[j] - mx) / z / double(n);
      d[y[size_t(b)]] -= 1.0 / double(n);
    }
  }
  return loss / double(n);
}

struct ForwardCaches {
  BlockCache c1, c2;
  Mat64 logits;
};

void forward_all(const ClassifierModel& m, const Mat64& X, ForwardCaches& f) {
  block_forward(m.norm_before_relu, m.fc1, m.ln1, X, f.c1);
  block_forward(m.norm_before_relu, m.fc2, m.ln2, f.c1.out, f.c2);
  fc_forward(m.fc3, f.c2.out, f.logits);
}

void zero_grads(ClfGrads& g) {
  std::fill(g.W1.data.begin(), g.W1.data.end(), 0.0);
  std::fill(g.W2.data.begin(), g.W2.data.end(), 0.0);
  std::fill(g.W3.data.begin(), g.W3.data.end(), 0.0);
  for (Vec64* v : {&g.b1, &g.b2, &g.b3, &g.g1, &g.be1, &g.g2, &g.be2})
    std::fill(v->begin(), v->end(), 0.0);
}

}  // namespace

Mat64 clf_logits(const ClassifierModel& m, const Mat64& X) {
  check_batch(m, X, nullptr);
  ForwardCaches f;
  forward_all(m, X, f);
  return std::move(f.logits);
}

double clf_loss(const ClassifierModel& m, const Mat64& X, const std::vector<int>& y) {
  check_batch(m, X, &y);
  ForwardCaches f;
  forward_all(m, X, f);
  return softmax_ce(f.logits, y, nullptr);
}

double clf_loss_and_grads(const ClassifierModel& m, const Mat64& X, const std::vector<int>& y,
                          ClfGrads& g) {
  check_batch(m, X, &y);
  zero_grads(g);
  ForwardCaches f;
  forward_all(m, X, f);
  Mat64 dlog(f.logits.rows, f.logits.cols);
  const double loss = softmax_ce(f.logits, y, &dlog);
  Mat64 d2, a2, d1, a1;
  fc_backward(m.fc3, f.c2.out, dlog, g.W3, g.b3, &d2);
  block_backward(m.norm_before_relu, m.ln2, f.c2, d2, g.g2, g.be2, a2);
  fc_backward(m.fc2, f.c1.out, a2, g.W2, g.b2, &d1);
  block_backward(m.norm_before_relu, m.ln1, f.c1, d1, g.g1, g.be1, a1);
  fc_backward(m.fc1, X, a1, g.W1, g.b1, nullptr);
  return loss;
}

namespace {

struct TensorView {
  double* p;
  const double* g;
  size_t len;
};

std::vector<TensorView> tensor_views(ClassifierModel& m, const ClfGrads& g) {
  return {
      {m.fc1.W.data.data(), g.W1.data.data(), m.fc1.W.data.size()},
      {m.fc1.b.data(), g.b1.data(), m.fc1.b.size()},
      {m.ln1.gamma.data(), g.g1.data(), m.ln1.gamma.size()},
      {m.ln1.beta.data(), g.be1.data(), m.ln1.beta.size()},
      {m.fc2.W.data.data(), g.W2.data.data(), m.fc2.W.data.size()},
      {m.fc2.b.data(), g.b2.data(), m.fc2.b.size()},
      {m.ln2.gamma.data(), g.g2.data(), m.ln2.gamma.size()},
      {m.ln2.beta.data(), g.be2.data(), m.ln2.beta.size()},
      {m.fc3.W.data.data(), g.W3.data.data(), m.fc3.W.data.size()},
      {m.fc3.b.data(), g.b3.data(), m.fc3.b.size()},
  };
}

}  // namespace

std::vector<ClfEpochRow> train_classifier(ClassifierModel& m, const Mat64& X,
                                          const std::vector<int>& y,
                                          const ClassifierTrainOptions& opts, uint64_t seed) {
  check_batch(m, X, &y);
  if (opts.batch <= 0 || opts.epochs < 0) throw std::invalid_argument("bad train options");
  const int n = X.rows;
  const int din = X.cols;

  ClfGrads grads = make_grads(m);
  std::vector<TensorView> views = tensor_views(m, grads);
  std::vector<Vec64> adam_m, adam_v;
  for (const TensorView& t : views) {
    adam_m.emplace_back(t.len, 0.0);
    adam_v.emplace_back(t.len, 0.0);
  }
  double b1t = 1.0, b2t = 1.0;

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<ClfEpochRow> rows;
  rows.reserve(size_t(opts.epochs));

  for (int e = 0; e < opts.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    if (opts.shuffle) {
      SeededRng rng(derive_seed(seed, "clf-epoch-" + std::to_string(e)));
      shuffle_indices(order, rng);
    }
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += opts.batch) {
      const int bn = std::min(opts.batch, n - start);
      Mat64 xb(bn, din);
      std::vector<int> yb(static_cast<size_t>(bn));
      for (int b = 0; b < bn; ++b) {
        const int src = order[size_t(start + b)];
        std::copy_n(X.row(src), din, xb.row(b));
        yb[size_t(b)] = y[size_t(src)];
      }
      loss_sum += clf_loss_and_grads(m, xb, yb, grads) * double(bn);

      b1t *= opts.beta1;
      b2t *= opts.beta2;
      const double corr1 = 1.0 - b1t;
      const double corr2 = 1.0 - b2t;
      for (size_t t = 0; t < views.size(); ++t) {
        double* p = views[t].p;
        const double* gr = views[t].g;
        double* mm = adam_m[t].data();
        double* vv = adam_v[t].data();
        for (size_t i = 0; i < views[t].len; ++i) {
          mm[i] = opts.beta1 * mm[i] + (1.0 - opts.beta1) * gr[i];
          vv[i] = opts.beta2 * vv[i] + (1.0 - opts.beta2) * gr[i] * gr[i];
          const double mhat = mm[i] / corr1;
          const double vhat = vv[i] / corr2;
          p[i] -= opts.lr * mhat / (std::sqrt(vhat) + opts.adam_eps);
        }
      }
    }
    ClfEpochRow row;
    row.epoch = e;
    row.loss = loss_sum / double(n);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

EvalResult evaluate_classifier(const ClassifierModel& m, const Mat64& X,
                               const std::vector<int>& y) {
  check_batch(m, X, &y);
  const Mat64 logits = clf_logits(m, X);
  const int k = m.num_classes();
  EvalResult r;
  r.per_class.assign(size_t(k), 0.0);
  r.class_counts.assign(size_t(k), 0);
  std::vector<int> hits(size_t(k), 0);
  r.predictions.resize(size_t(X.rows));
  for (int b = 0; b < X.rows; ++b) {
    const double* l = logits.row(b);
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (l[j] > l[best]) best = j;  // strict: lowest index wins ties
    r.predictions[size_t(b)] = best;
    const int label = y[size_t(b)];
    ++r.class_counts[size_t(label)];
    if (best == label) ++hits[size_t(label)];
  }
  int total_hits = 0;
  for (int c = 0; c < k; ++c) {
    total_hits += hits[size_t(c)];
    r.per_class[size_t(c)] =
        r.class_counts[size_t(c)] > 0 ? double(hits[size_t(c)]) / r.class_counts[size_t(c)] : 0.0;
  }
  r.accuracy = double(total_hits) / double(X.rows);
  return r;
}

GradCheckResult grad_check(ClassifierModel& m, const Mat64& X, const std::vector<int>& y,
                           int per_tensor, uint64_t seed) {
  check_batch(m, X, &y);
  if (per_tensor <= 0) throw std::invalid_argument("per_tensor must be positive");
  ClfGrads grads = make_grads(m);
  clf_loss_and_grads(m, X, y, grads);
  std::vector<TensorView> views = tensor_views(m, grads);
  SeededRng rng(seed);
  const double h = 1e-5;
  GradCheckResult res;
  for (TensorView& t : views) {
    for (int s = 0; s < per_tensor; ++s) {
      const size_t i = size_t(rng.next_below(t.len));
      const double saved = t.p[i];
      t.p[i] = saved + h;
      const double lp = clf_loss(m, X, y);
      t.p[i] = saved - h;
      const double lm = clf_loss(m, X, y);
      t.p[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = t.g[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

}  // namespace neaw
