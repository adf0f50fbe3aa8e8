#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>

#include "neaw/numerics.hpp"

using namespace neaw;

namespace {

Mat64 random_mat(int r, int c, SeededRng& rng) {
  Mat64 m(r, c);
  for (auto& x : m.data) x = rng.next_gaussian();
  return m;
}

Vec64 random_vec(int n, SeededRng& rng) {
  Vec64 v(n);
  for (auto& x : v) x = rng.next_gaussian();
  return v;
}

}  // namespace

TEST_CASE("matvec_t matches double-loop oracle") {
  SeededRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int r = 1 + int(rng.next_below(12));
    const int c = 1 + int(rng.next_below(12));
    const Mat64 w = random_mat(r, c, rng);
    const Vec64 x = random_vec(r, rng);
    const Vec64 got = matvec_t(w, x);
    REQUIRE(int(got.size()) == c);
    for (int j = 0; j < c; ++j) {
      double want = 0.0;
      for (int i = 0; i < r; ++i) want += x[i] * w.at(i, j);
      CHECK(std::abs(got[j] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
  CHECK_THROWS_AS(matvec_t(Mat64(3, 2), Vec64(2)), std::invalid_argument);
}

TEST_CASE("euclid_dist matches elementwise oracle and triangle inequality") {
  SeededRng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + int(rng.next_below(16));
    const Vec64 a = random_vec(n, rng), b = random_vec(n, rng), c = random_vec(n, rng);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::abs(euclid_dist(a, b) - std::sqrt(s)) <= 1e-12);
    CHECK(euclid_dist(a, b) == euclid_dist(b, a));
    CHECK(euclid_dist(a, c) <= euclid_dist(a, b) + euclid_dist(b, c) + 1e-9);
  }
  CHECK(euclid_dist(Vec64{1.0, 2.0}, Vec64{1.0, 2.0}) == 0.0);
}

TEST_CASE("argmin lowest-index tie-break") {
  CHECK(argmin_tiebreak({3.0, 1.0, 1.0, 2.0}) == 1);
  // 1.0 - 1e-18 rounds to 1.0 in binary64, so the first element ties and wins.
  CHECK(1.0 - 1e-18 == 1.0);
  CHECK(argmin_tiebreak({1.0, 1.0 - 1e-18, 2.0}) == 0);
  CHECK(argmin_tiebreak({5.0}) == 0);
  CHECK_THROWS_AS(argmin_tiebreak(Vec64{}), std::invalid_argument);
  CHECK(argmax_tiebreak({2.0, 7.0, 7.0}) == 1);
}

TEST_CASE("SeededRng streams are reproducible and seed-sensitive") {
  SeededRng a(123), b(123), c(124);
  bool anydiff = false;
  for (int i = 0; i < 1000; ++i) {
    const uint64_t x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) anydiff = true;
  }
  CHECK(anydiff);

  SeededRng d(7), e(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.next_double();
    CHECK(u == e.next_double());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("SeededRng frozen stream values") {
  // The counter-based stream is part of the file-format/reproducibility
  // contract; these constants pin it against accidental algorithm changes.
  SeededRng r(42);
  CHECK(r.next_u64() == 13679457532755275413ull);
  CHECK(r.next_u64() == 2949826092126892291ull);
  CHECK(derive_seed(0, "gen") != derive_seed(0, "encoder"));
  CHECK(derive_seed(0, "gen") == derive_seed(0, "gen"));
  CHECK(derive_seed(1, "gen") != derive_seed(2, "gen"));
}

TEST_CASE("gaussian moments and finiteness") {
  SeededRng rng(55);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gaussian();
    REQUIRE(std::isfinite(g));
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // 5 sigma bounds: sd of the sample mean is 1/sqrt(n), of the variance ~ sqrt(2/n).
  CHECK(std::abs(mean) < 5.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / double(n)));
}

TEST_CASE("next_below bounds and rough uniformity") {
  SeededRng rng(9);
  const uint64_t k = 10;
  const int n = 100000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    const uint64_t v = rng.next_below(k);
    REQUIRE(v < k);
    counts[size_t(v)]++;
  }
  // Binomial 5 sigma per bucket.
  const double p = 1.0 / double(k);
  const double sigma = std::sqrt(n * p * (1 - p));
  for (auto cnt : counts) CHECK(std::abs(cnt - n * p) < 5.0 * sigma);
  CHECK_THROWS_AS(rng.next_below(0), std::invalid_argument);
}

TEST_CASE("shuffle_indices is a seeded permutation") {
  std::vector<int> idx(20);
  for (int i = 0; i < 20; ++i) idx[i] = i;
  auto one = idx, two = idx;
  SeededRng r1(3), r2(3), r3(4);
  shuffle_indices(one, r1);
  shuffle_indices(two, r2);
  CHECK(one == two);
  CHECK(std::set<int>(one.begin(), one.end()).size() == 20);
  auto three = idx;
  shuffle_indices(three, r3);
  CHECK(three != one);
}

TEST_CASE("Mat64 column access round-trips") {
  Mat64 m(3, 2, 0.0);
  m.set_col(1, {1.0, 2.0, 3.0});
  CHECK(m.col(1) == Vec64{1.0, 2.0, 3.0});
  CHECK(m.col(0) == Vec64{0.0, 0.0, 0.0});
  CHECK(m.at(2, 1) == 3.0);
  CHECK_THROWS_AS(m.col(2), std::invalid_argument);
  CHECK_THROWS_AS(m.set_col(0, {1.0}), std::invalid_argument);
  CHECK(all_finite(m));
  m.at(0, 0) = std::nan("");
  CHECK(!all_finite(m));
}
