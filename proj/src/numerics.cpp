#include "neaw/numerics.hpp"

#include <cmath>

namespace neaw {

Mat64::Mat64(int r, int c, double fill) : rows(r), cols(c) {
  if (r < 0 || c < 0) throw std::invalid_argument("Mat64: negative shape");
  data.assign(size_t(r) * size_t(c), fill);
}

Vec64 Mat64::col(int c) const {
  if (c < 0 || c >= cols) throw std::invalid_argument("Mat64::col: index out of range");
  Vec64 v(rows);
  for (int r = 0; r < rows; ++r) v[r] = at(r, c);
  return v;
}

void Mat64::set_col(int c, const Vec64& v) {
  if (c < 0 || c >= cols) throw std::invalid_argument("Mat64::set_col: index out of range");
  if (int(v.size()) != rows) throw std::invalid_argument("Mat64::set_col: length mismatch");
  for (int r = 0; r < rows; ++r) at(r, c) = v[r];
}

namespace {
constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ull;

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t SeededRng::next_u64() { return mix64(state_ += kGamma); }

double SeededRng::next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::next_gaussian() {
  // u1 in (0,1] so the log is finite; u2 in [0,1).
  const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = double(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692528676656 * u2);
}

uint64_t SeededRng::next_below(uint64_t n) {
  if (n == 0) throw std::invalid_argument("SeededRng::next_below: n must be >= 1");
  const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  uint64_t x;
  do {
    x = next_u64();
  } while (x < threshold);
  return x % n;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a64(std::string_view bytes) { return fnv1a64(bytes.data(), bytes.size()); }

uint64_t derive_seed(uint64_t master, std::string_view phase) {
  return mix64(master + kGamma * (fnv1a64(phase) | 1));
}

Vec64 matvec_t(const Mat64& w, const Vec64& x) {
  if (int(x.size()) != w.rows) throw std::invalid_argument("matvec_t: shape mismatch");
  Vec64 out(size_t(w.cols), 0.0);
  for (int i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    const double* wr = w.row(i);
    for (int j = 0; j < w.cols; ++j) out[j] += xi * wr[j];
  }
  return out;
}

double dot(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double euclid_dist(const Vec64& a, const Vec64& b) {
  if (a.size() != b.size()) throw std::invalid_argument("euclid_dist: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double norm2(const Vec64& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

int argmin_tiebreak(const Vec64& v) {
  if (v.empty()) throw std::invalid_argument("argmin_tiebreak: empty input");
  int best = 0;
  for (int i = 1; i < int(v.size()); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

int argmax_tiebreak(const Vec64& v) {
  if (v.empty()) throw std::invalid_argument("argmax_tiebreak: empty input");
  int best = 0;
  for (int i = 1; i < int(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

void shuffle_indices(std::vector<int>& idx, SeededRng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = size_t(rng.next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

bool all_finite(const Vec64& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Mat64& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace neaw
