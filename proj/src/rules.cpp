#include "neaw/rules.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace neaw {

RuleKind rule_from_name(std::string_view name) {
  if (name == "hebb") return RuleKind::Hebb;
  if (name == "oja") return RuleKind::Oja;
  if (name == "grossberg") return RuleKind::Grossberg;
  if (name == "neaw") return RuleKind::NeAW;
  if (name == "neaw-h") return RuleKind::NeAW_H;
  if (name == "neaw-ah") return RuleKind::NeAW_aH;
  throw std::invalid_argument("unknown rule: " + std::string(name));
}

std::string_view rule_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::Hebb: return "hebb";
    case RuleKind::Oja: return "oja";
    case RuleKind::Grossberg: return "grossberg";
    case RuleKind::NeAW: return "neaw";
    case RuleKind::NeAW_H: return "neaw-h";
    case RuleKind::NeAW_aH: return "neaw-ah";
  }
  throw std::logic_error("bad RuleKind");
}

bool is_neaw_family(RuleKind kind) {
  return kind == RuleKind::NeAW || kind == RuleKind::NeAW_H || kind == RuleKind::NeAW_aH;
}

ActivityState make_activity(int d) {
  if (d <= 0) throw std::invalid_argument("activity dimension must be positive");
  ActivityState s;
  s.counts.assign(size_t(d), 0);
  return s;
}

void record_winners(ActivityState& state, std::span<const int> winners) {
  for (int w : winners) {
    if (w < 0 || w >= state.d()) throw std::out_of_range("winner index out of range");
    ++state.counts[size_t(w)];
  }
  state.total += int64_t(winners.size());
}

double activity_variance(const ActivityState& state) {
  if (state.total <= 0) throw std::invalid_argument("activity variance needs total > 0");
  const double n = double(state.total);
  double acc = 0.0;
  for (int64_t c : state.counts) {
    const double q = double(c) / n;
    acc += q * q;
  }
  return 1.0 - acc;
}

double neaw_factor(const RuleConfig& cfg, double p_star, double p) {
  if (cfg.kind == RuleKind::NeAW_H) return 1.0;
  if (cfg.kind == RuleKind::NeAW_aH) return -1.0;
  const double gap = p_star - p;
  if (gap > cfg.activity_epsilon) return cfg.a;    // under-active: pull toward input
  if (gap < -cfg.activity_epsilon) return -cfg.b;  // over-active: push away
  return 0.0;
}

// ---------------------------------------------------------------------------
// Batch cores. Dense inputs are rows[p][0..d_in); sparse inputs are one-hot
// (in_idx[p], in_val[p]). Both sides of every scan/update use the exact same
// expressions, so densifying a one-hot batch reproduces the sparse result
// bit-for-bit on finite weights.

namespace {

// For every neuron j, index of the batch input minimizing ||x - W_col_j||.
// score = ||x||^2 - 2 x.col, and equal scores resolve to the lowest input
// index: inputs are walked in order with a strict-< blend, so the first
// input attaining each minimum sticks. One pass, full-width inner loops;
// the running minima and argmin slots live in d_out-sized scratch the
// caller provides (m / mp, argmin stored as double so the blend stays in
// one vector type). Inputs that leave every score NaN fall back to 0 via
// the mp initialization, same as a sequential scan's untouched state.
void closest_dense(const WtaLayer& layer, const double* const* rows, const double* xsq, int n,
                   int* best, double* s, double* m, double* mp) {
  const int din = layer.d_in(), dout = layer.d_out();
  const double* W = layer.W.data.data();
  std::fill(m, m + dout, std::numeric_limits<double>::infinity());
  std::fill(mp, mp + dout, 0.0);
  for (int p = 0; p < n; ++p) {
    const double* x = rows[p];
    const double xq = xsq[p];
#pragma omp simd
    for (int j = 0; j < dout; ++j) s[j] = xq;
    for (int i = 0; i < din; ++i) {
      const double m2x = -2.0 * x[i];
      const double* wrow = W + size_t(i) * size_t(dout);
#pragma omp simd
      for (int j = 0; j < dout; ++j) s[j] += m2x * wrow[j];
    }
    const double dp = double(p);
#pragma omp simd
    for (int j = 0; j < dout; ++j) {
      const bool lt = s[j] < m[j];
      mp[j] = lt ? dp : mp[j];
      m[j] = lt ? s[j] : m[j];
    }
  }
  for (int j = 0; j < dout; ++j) best[j] = int(mp[j]);
}

void closest_sparse(const WtaLayer& layer, const int* in_idx, const double* in_val, int n,
                    int* best, double* m, double* mp) {
  const int dout = layer.d_out();
  const double* W = layer.W.data.data();
  std::fill(m, m + dout, std::numeric_limits<double>::infinity());
  std::fill(mp, mp + dout, 0.0);
  for (int p = 0; p < n; ++p) {
    const double v = in_val[p];
    const double vsq = v * v;
    const double m2v = -2.0 * v;
    const double* wrow = W + size_t(in_idx[p]) * size_t(dout);
    const double dp = double(p);
#pragma omp simd
    for (int j = 0; j < dout; ++j) {
      const double s = vsq + m2v * wrow[j];
      const bool lt = s < m[j];
      mp[j] = lt ? dp : mp[j];
      m[j] = lt ? s : m[j];
    }
  }
  for (int j = 0; j < dout; ++j) best[j] = int(mp[j]);
}

// Column j moves by f[j] * (x_best - col). f[j] == 0 skips the column so a
// zero-step batch leaves every bit of the matrix untouched.
void pull_dense(WtaLayer& layer, const double* const* rows, const int* best, const double* f) {
  const int din = layer.d_in(), dout = layer.d_out();
  for (int j = 0; j < dout; ++j) {
    const double fj = f[j];
    if (fj == 0.0) continue;
    const double* x = rows[best[j]];
    double* w = layer.W.data.data() + j;
    for (int i = 0; i < din; ++i) {
      double& wij = w[size_t(i) * size_t(dout)];
      wij += fj * (x[i] - wij);
    }
  }
}

// Row-major sweep with a blend: columns whose step is zero keep their exact
// bits (the speculative update lane is discarded), matching the skip in
// pull_dense. rj/vj are caller scratch of length d_out.
void pull_sparse(WtaLayer& layer, const int* in_idx, const double* in_val, const int* best,
                 const double* f, double* rj, double* vj) {
  const int din = layer.d_in(), dout = layer.d_out();
  for (int j = 0; j < dout; ++j) {
    rj[j] = double(in_idx[best[j]]);
    vj[j] = in_val[best[j]];
  }
  for (int i = 0; i < din; ++i) {
    const double di = double(i);
    double* wrow = layer.W.data.data() + size_t(i) * size_t(dout);
    for (int j = 0; j < dout; ++j) {
      const double wij = wrow[j];
      const double xi = di == rj[j] ? vj[j] : 0.0;
      const double upd = wij + f[j] * (xi - wij);
      wrow[j] = f[j] != 0.0 ? upd : wij;
    }
  }
}

}  // namespace

void neaw_update(WtaLayer& layer, const std::vector<Vec64>& inputs, const ActivityState& state,
                 const RuleConfig& cfg) {
  if (!is_neaw_family(cfg.kind)) throw std::invalid_argument("neaw_update needs a NeAW-family rule");
  if (inputs.empty()) throw std::invalid_argument("neaw_update needs at least one input");
  if (state.total <= 0) throw std::invalid_argument("neaw_update needs recorded activity");
  if (state.d() != layer.d_out()) throw std::invalid_argument("activity/layer width mismatch");
  const int n = int(inputs.size());
  std::vector<const double*> rows(static_cast<size_t>(n));
  Vec64 xsq(static_cast<size_t>(n));
  for (int p = 0; p < n; ++p) {
    if (int(inputs[size_t(p)].size()) != layer.d_in())
      throw std::invalid_argument("input/layer dimension mismatch");
    rows[size_t(p)] = inputs[size_t(p)].data();
    xsq[size_t(p)] = dot(inputs[size_t(p)], inputs[size_t(p)]);
  }
  const int dout = layer.d_out();
  std::vector<int> best(size_t(dout), 0);
  Vec64 f(size_t(dout), 0.0), s(size_t(dout), 0.0), m(size_t(dout), 0.0), mp(size_t(dout), 0.0);
  closest_dense(layer, rows.data(), xsq.data(), n, best.data(), s.data(), m.data(), mp.data());
  const double step = cfg.eta / double(n);
  const double p_star = state.p_star();
  for (int j = 0; j < dout; ++j) f[size_t(j)] = neaw_factor(cfg, p_star, state.p(j)) * step;
  pull_dense(layer, rows.data(), best.data(), f.data());
}

void baseline_update(WtaLayer& layer, const Vec64& x, int winner, double value,
                     const RuleConfig& cfg) {
  if (is_neaw_family(cfg.kind)) throw std::invalid_argument("baseline_update needs a baseline rule");
  if (int(x.size()) != layer.d_in()) throw std::invalid_argument("input/layer dimension mismatch");
  if (winner < 0 || winner >= layer.d_out()) throw std::out_of_range("winner out of range");
  const int din = layer.d_in(), dout = layer.d_out();
  double* w = layer.W.data.data() + winner;
  switch (cfg.kind) {
    case RuleKind::Hebb:
      for (int i = 0; i < din; ++i) w[size_t(i) * size_t(dout)] += cfg.eta * value * x[size_t(i)];
      break;
    case RuleKind::Oja:
      for (int i = 0; i < din; ++i) {
        double& wi = w[size_t(i) * size_t(dout)];
        wi += cfg.eta * value * (x[size_t(i)] - value * wi);
      }
      break;
    case RuleKind::Grossberg:
      for (int i = 0; i < din; ++i) {
        double& wi = w[size_t(i) * size_t(dout)];
        wi += cfg.eta * (x[size_t(i)] - wi);
      }
      break;
    default: break;
  }
}

// ---------------------------------------------------------------------------
// Training loop. One forward pass per batch; activations stay frozen while
// the batch's updates are applied (greedy_layerwise re-derives them after
// each layer instead).

namespace {

struct BatchWork {
  std::vector<const double*> rows;  // layer-0 inputs
  Vec64 xsq;
  std::vector<std::vector<int>> win;     // [layer][point]
  std::vector<std::vector<double>> val;  // [layer][point]
  std::vector<int> best;
  Vec64 score;
  Vec64 cmin, carg;  // closest-scan running minima / argmin slots
  Vec64 f;
  Vec64 rj, vj;
};

// Recompute winners/values for layers [from, L) against current weights.
// Layer 0 consumes the dense rows; deeper layers consume the one-hot code of
// the previous layer. Identical expressions to encode_point_ws.
void forward_batch(const EncoderModel& model, const EncoderScratch& ws, BatchWork& work,
                   int from, int n) {
  const int nlayers = int(model.layers.size());
  for (int l = from; l < nlayers; ++l) {
    const Mat64& w = model.layers[size_t(l)].W;
    const double* colsq = ws.colsq[size_t(l)].data();
    int* wout = work.win[size_t(l)].data();
    double* vout = work.val[size_t(l)].data();
    if (l == 0) {
      for (int p = 0; p < n; ++p)
        detail::layer_scan_dense(w, colsq, work.rows[size_t(p)], work.score.data(), &wout[p],
                                 &vout[p]);
    } else {
      const int* pin = work.win[size_t(l - 1)].data();
      const double* vin = work.val[size_t(l - 1)].data();
      for (int p = 0; p < n; ++p)
        detail::layer_scan_sparse(w, colsq, pin[p], vin[p], &wout[p], &vout[p]);
    }
  }
}

void batch_counts(const std::vector<int>& win, int n, ActivityState& out) {
  std::fill(out.counts.begin(), out.counts.end(), 0);
  out.total = 0;
  record_winners(out, std::span<const int>(win.data(), size_t(n)));
}

double checked_decay(double d) {
  if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("ema decay must be in [0, 1)");
  return d;
}

// Temporary attribution counters, printed per epoch when NEAW_PROFILE is set.
struct PhaseProf {
  double forward = 0, tally = 0, closest = 0, pull = 0, refresh = 0, baseline = 0;
  void dump(double total) const {
    fprintf(stderr,
            "[prof] fwd=%.3f tally=%.3f closest=%.3f pull=%.3f refresh=%.3f base=%.3f "
            "total=%.3f\n",
            forward, tally, closest, pull, refresh, baseline, total);
  }
};

bool profile_enabled() {
  static const bool on = std::getenv("NEAW_PROFILE") != nullptr;
  return on;
}

double prof_now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

EpochStats train_encoder_epoch(EncoderModel& model, const std::vector<PointCloud>& clouds,
                               const RuleConfig& rule, const EncoderTrainOptions& opts,
                               uint64_t seed, int epoch_index, EncoderTrainState* state) {
  const auto t0 = std::chrono::steady_clock::now();
  if (clouds.empty()) throw std::invalid_argument("train_encoder_epoch needs clouds");
  if (opts.batch_clouds <= 0) throw std::invalid_argument("batch_clouds must be positive");
  const int nlayers = int(model.layers.size());
  const int din = model.input_dim();
  for (const PointCloud& c : clouds) {
    if (c.dim() != din) throw std::invalid_argument("cloud/model dimension mismatch");
    if (c.size() == 0) throw std::invalid_argument("empty cloud");
  }
  if (opts.activity_ema) checked_decay(opts.ema_decay);
  EncoderTrainState local_state;  // direct callers still get EMA within the epoch
  if (opts.activity_ema && !state) state = &local_state;

  EpochStats stats;
  stats.epoch_activity.reserve(size_t(nlayers));
  stats.last_batch_activity.reserve(size_t(nlayers));
  for (int l = 0; l < nlayers; ++l) {
    stats.epoch_activity.push_back(make_activity(model.layers[size_t(l)].d_out()));
    stats.last_batch_activity.push_back(make_activity(model.layers[size_t(l)].d_out()));
  }
  if (state && opts.activity_ema && state->ema_p.empty())
    state->ema_p.assign(size_t(nlayers), Vec64());

  size_t max_points = 0;
  for (const PointCloud& c : clouds) max_points = std::max(max_points, size_t(c.size()));
  max_points *= size_t(opts.batch_clouds);
  int max_dout = 0;
  for (const WtaLayer& l : model.layers) max_dout = std::max(max_dout, l.d_out());

  BatchWork work;
  work.rows.resize(max_points);
  work.xsq.resize(max_points);
  work.win.assign(size_t(nlayers), std::vector<int>(max_points));
  work.val.assign(size_t(nlayers), std::vector<double>(max_points));
  work.best.resize(size_t(max_dout));
  work.score.resize(size_t(max_dout));
  work.cmin.resize(size_t(max_dout));
  work.carg.resize(size_t(max_dout));
  work.f.resize(size_t(max_dout));
  work.rj.resize(size_t(max_dout));
  work.vj.resize(size_t(max_dout));

  EncoderScratch ws;
  ws.refresh(model);

  SeededRng rng(derive_seed(seed, "epoch-" + std::to_string(epoch_index)));
  std::vector<int> order(clouds.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_indices(order, rng);

  const bool updates_on = rule.eta != 0.0;
  PhaseProf prof;
  double tmark = profile_enabled() ? prof_now() : 0.0;
  auto lap = [&](double PhaseProf::*field) {
    if (!profile_enabled()) return;
    const double now = prof_now();
    prof.*field += now - tmark;
    tmark = now;
  };
  size_t cursor = 0;
  while (cursor < order.size()) {
    const size_t take = std::min(size_t(opts.batch_clouds), order.size() - cursor);
    int n = 0;
    for (size_t b = 0; b < take; ++b) {
      const PointCloud& c = clouds[size_t(order[cursor + b])];
      for (int p = 0; p < c.size(); ++p) {
        std::span<const double> pt = c.point(p);
        work.rows[size_t(n)] = pt.data();
        work.xsq[size_t(n)] = 0.0;
        for (double v : pt) work.xsq[size_t(n)] += v * v;
        ++n;
      }
    }
    cursor += take;

    forward_batch(model, ws, work, 0, n);
    lap(&PhaseProf::forward);

    bool weights_changed = false;
    for (int l = 0; l < nlayers; ++l) {
      WtaLayer& layer = model.layers[size_t(l)];
      const int dout = layer.d_out();
      ActivityState& tally = stats.last_batch_activity[size_t(l)];
      batch_counts(work.win[size_t(l)], n, tally);
      record_winners(stats.epoch_activity[size_t(l)],
                     std::span<const int>(work.win[size_t(l)].data(), size_t(n)));
      lap(&PhaseProf::tally);

      if (!updates_on) continue;

      bool layer_changed = false;
      if (is_neaw_family(rule.kind)) {
        const bool update_this = !opts.last_layer_only || l == nlayers - 1;
        // EMA advances on every batch so frozen layers still shape the state.
        const double* p_vec = nullptr;
        if (opts.activity_ema && state) {
          Vec64& ema = state->ema_p[size_t(l)];
          if (ema.empty()) {
            ema.resize(size_t(dout));
            for (int j = 0; j < dout; ++j) ema[size_t(j)] = tally.p(j);
          } else {
            for (int j = 0; j < dout; ++j)
              ema[size_t(j)] = opts.ema_decay * ema[size_t(j)] +
                               (1.0 - opts.ema_decay) * tally.p(j);
          }
          p_vec = ema.data();
        }
        if (update_this) {
          const double step = rule.eta / double(n);
          const double p_star = 1.0 / double(dout);
          bool any = false;
          for (int j = 0; j < dout; ++j) {
            const double pj = p_vec ? p_vec[j] : tally.p(j);
            const double fj = neaw_factor(rule, p_star, pj) * step;
            work.f[size_t(j)] = fj;
            any = any || fj != 0.0;
          }
          if (any) {
            if (l == 0) {
              closest_dense(layer, work.rows.data(), work.xsq.data(), n, work.best.data(),
                            work.score.data(), work.cmin.data(), work.carg.data());
              lap(&PhaseProf::closest);
              pull_dense(layer, work.rows.data(), work.best.data(), work.f.data());
              lap(&PhaseProf::pull);
            } else {
              closest_sparse(layer, work.win[size_t(l - 1)].data(), work.val[size_t(l - 1)].data(),
                             n, work.best.data(), work.cmin.data(), work.carg.data());
              lap(&PhaseProf::closest);
              pull_sparse(layer, work.win[size_t(l - 1)].data(), work.val[size_t(l - 1)].data(),
                          work.best.data(), work.f.data(), work.rj.data(), work.vj.data());
              lap(&PhaseProf::pull);
            }
            layer_changed = true;
          }
        }
      } else {
        const int* wn = work.win[size_t(l)].data();
        const double* vl = work.val[size_t(l)].data();
        if (l == 0) {
          for (int p = 0; p < n; ++p) {
            // Dense per-point update on the winner column.
            const double* x = work.rows[size_t(p)];
            double* w = layer.W.data.data() + wn[p];
            const int d0 = layer.d_in();
            switch (rule.kind) {
              case RuleKind::Hebb:
                for (int i = 0; i < d0; ++i)
                  w[size_t(i) * size_t(dout)] += rule.eta * vl[p] * x[i];
                break;
              case RuleKind::Oja:
                for (int i = 0; i < d0; ++i) {
                  double& wi = w[size_t(i) * size_t(dout)];
                  wi += rule.eta * vl[p] * (x[i] - vl[p] * wi);
                }
                break;
              case RuleKind::Grossberg:
                for (int i = 0; i < d0; ++i) {
                  double& wi = w[size_t(i) * size_t(dout)];
                  wi += rule.eta * (x[i] - wi);
                }
                break;
              default: break;
            }
          }
        } else {
          const int* pin = work.win[size_t(l - 1)].data();
          const double* vin = work.val[size_t(l - 1)].data();
          const int d0 = layer.d_in();
          for (int p = 0; p < n; ++p) {
            double* w = layer.W.data.data() + wn[p];
            switch (rule.kind) {
              case RuleKind::Hebb:
                // Zero coordinates contribute nothing; only the hot row moves.
                w[size_t(pin[p]) * size_t(dout)] += rule.eta * vl[p] * vin[p];
                break;
              case RuleKind::Oja:
                for (int i = 0; i < d0; ++i) {
                  double& wi = w[size_t(i) * size_t(dout)];
                  const double xi = (i == pin[p]) ? vin[p] : 0.0;
                  wi += rule.eta * vl[p] * (xi - vl[p] * wi);
                }
                break;
              case RuleKind::Grossberg:
                for (int i = 0; i < d0; ++i) {
                  double& wi = w[size_t(i) * size_t(dout)];
                  const double xi = (i == pin[p]) ? vin[p] : 0.0;
                  wi += rule.eta * (xi - wi);
                }
                break;
              default: break;
            }
          }
        }
        layer_changed = true;
        lap(&PhaseProf::baseline);
      }

      if (layer_changed) {
        weights_changed = true;
        if (opts.greedy_layerwise && l < nlayers - 1) {
          ws.refresh(model);
          forward_batch(model, ws, work, l, n);
        }
      }
    }
    if (weights_changed) ws.refresh(model);
    lap(&PhaseProf::refresh);
  }

  // Column norm stats straight off the refreshed cache.
  double acc = 0.0, mx = 0.0;
  size_t ncols = 0;
  for (int l = 0; l < nlayers; ++l) {
    for (double sq : ws.colsq[size_t(l)]) {
      const double nrm = std::sqrt(sq);
      acc += nrm;
      mx = std::max(mx, nrm);
      ++ncols;
    }
  }
  stats.mean_col_norm = acc / double(ncols);
  stats.max_col_norm = mx;
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (profile_enabled()) prof.dump(stats.wall_seconds);
  return stats;
}

std::vector<TelemetryRow> train_encoder_range(EncoderModel& model,
                                              const std::vector<PointCloud>& clouds,
                                              const RuleConfig& rule,
                                              const EncoderTrainOptions& opts, uint64_t seed,
                                              int epoch_begin, int epoch_end,
                                              EncoderTrainState* state,
                                              const EpochCallback& on_epoch) {
  if (epoch_begin < 0 || epoch_end < epoch_begin)
    throw std::invalid_argument("bad epoch range");
  EncoderTrainState local;
  if (!state) state = &local;
  std::vector<TelemetryRow> rows;
  rows.reserve(size_t(epoch_end - epoch_begin));
  for (int e = epoch_begin; e < epoch_end; ++e) {
    const EpochStats stats = train_encoder_epoch(model, clouds, rule, opts, seed, e, state);
    TelemetryRow row;
    row.epoch = e;
    row.layer_variance.reserve(stats.epoch_activity.size());
    for (const ActivityState& s : stats.epoch_activity)
      row.layer_variance.push_back(activity_variance(s));
    row.mean_col_norm = stats.mean_col_norm;
    row.max_col_norm = stats.max_col_norm;
    row.wall_seconds = stats.wall_seconds;
    if (on_epoch) on_epoch(row, model);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TelemetryRow> train_encoder(EncoderModel& model,
                                        const std::vector<PointCloud>& clouds,
                                        const RuleConfig& rule, const EncoderTrainOptions& opts,
                                        uint64_t seed, const EpochCallback& on_epoch) {
  return train_encoder_range(model, clouds, rule, opts, seed, 0, opts.epochs, nullptr, on_epoch);
}

}  // namespace neaw
