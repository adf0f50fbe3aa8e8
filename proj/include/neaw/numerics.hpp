#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace neaw {

using Vec64 = std::vector<double>;

// Dense row-major matrix of doubles. Weight matrices are d_in x d_out with
// column j holding the weight vector of output neuron j, so a row scan
// touches one input coordinate across all neurons (contiguous).
struct Mat64 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat64() = default;
  Mat64(int r, int c, double fill = 0.0);

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
  double* row(int r) { return data.data() + size_t(r) * cols; }
  const double* row(int r) const { return data.data() + size_t(r) * cols; }

  Vec64 col(int c) const;
  void set_col(int c, const Vec64& v);

  bool same_shape(const Mat64& o) const { return rows == o.rows && cols == o.cols; }
};

// Counter-based generator. Output i is mix64(seed + (i+1)*GAMMA), i.e. a hash
// of the call index; the stream depends only on (seed, index), never on
// platform state, so identical seeds give identical streams everywhere.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  // [0, 1), 53-bit resolution.
  double next_double();
  // Standard normal via Box-Muller; consumes exactly two raw draws.
  double next_gaussian();
  // Unbiased integer in [0, n); rejection sampling, n >= 1.
  uint64_t next_below(uint64_t n);

 private:
  uint64_t state_;
};

// FNV-1a 64-bit over arbitrary bytes.
uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64(const void* data, size_t len);

// Stable per-phase seed: mixes the master seed with a phase tag so that
// independent phases (gen, encoder, classifier, per-epoch, per-cloud) draw
// from unrelated streams.
uint64_t derive_seed(uint64_t master, std::string_view phase);

// Returns W^T x (length cols). Throws std::invalid_argument on shape mismatch.
Vec64 matvec_t(const Mat64& w, const Vec64& x);

double dot(const Vec64& a, const Vec64& b);
double euclid_dist(const Vec64& a, const Vec64& b);
double norm2(const Vec64& a);

// Index of the smallest element, lowest index on ties. Throws on empty input.
int argmin_tiebreak(const Vec64& v);
int argmax_tiebreak(const Vec64& v);

// In-place Fisher-Yates driven by the given stream.
void shuffle_indices(std::vector<int>& idx, SeededRng& rng);

bool all_finite(const Vec64& v);
bool all_finite(const Mat64& m);

}  // namespace neaw
