#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gradnoise/rng.hpp"
#include "gradnoise/tensor.hpp"

using namespace gradnoise;

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(Shape(rows, cols));
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

// Standard normal CDF.
double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("tensor construction checks data length") {
  CHECK_THROWS_AS(Tensor(Shape(2, 2), std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t(Shape(2, 3), 1.5);
  CHECK(t.size() == 6);
  CHECK(t.shape().numel() == 6);
  CHECK(t(1, 2) == 1.5);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const auto r = matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{5, 6}, {7, 8}}));
    CHECK(r == Tensor::matrix({{5, 6}, {7, 8}}));
  }
  SUBCASE("row times column") {
    CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})) == Tensor::matrix({{11}}));
  }
  SUBCASE("zero annihilates") {
    Rng rng(3);
    const auto r = matmul(Tensor(Shape(2, 3)), random_matrix(rng, 3, 4));
    CHECK(r.shape() == Shape(2, 4));
    CHECK(max_abs(r) == 0.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor(Shape(2, 3)), Tensor(Shape(4, 2)));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[4, 2]") != std::string::npos);
    }
  }
  SUBCASE("transposed variants agree with explicit products") {
    Rng rng(11);
    const auto a = random_matrix(rng, 4, 3);
    const auto b = random_matrix(rng, 4, 5);
    Tensor at(Shape(3, 4));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) at(j, i) = a(i, j);
    CHECK(max_abs_diff(matmul_tn(a, b), matmul(at, b)) < 1e-15);
    const auto c = random_matrix(rng, 5, 3);
    Tensor ct(Shape(3, 5));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) ct(j, i) = c(i, j);
    CHECK(max_abs_diff(matmul_nt(a, c), matmul(a, ct)) < 1e-15);
  }
}

TEST_CASE("matmul is associative on random small matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(8), k = 1 + rng.uniform_index(8), m = 1 + rng.uniform_index(8),
                      p = 1 + rng.uniform_index(8);
    const auto a = random_matrix(rng, n, k);
    const auto b = random_matrix(rng, k, m);
    const auto c = random_matrix(rng, m, p);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("elementwise") {
  CHECK(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})) == Tensor::vector({4, 6}));
  CHECK(mul(Tensor::vector({1, 2}), Tensor::vector({0, 0})) == Tensor::vector({0, 0}));
  const auto x = Tensor::vector({0.25, -3.5, 1e10});
  CHECK(sub(x, x) == Tensor::vector({0, 0, 0}));
  CHECK_THROWS_AS(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor(Shape(2, 1)), Tensor(Shape(2))), DimensionError);
}

TEST_CASE("global_norm") {
  CHECK(global_norm(std::vector<Tensor>{Tensor::matrix({{3, 4}})}) == 5.0);
  CHECK(global_norm(std::vector<Tensor>{Tensor::vector({3}), Tensor::vector({4})}) == 5.0);
  CHECK(global_norm(std::vector<Tensor>{Tensor(Shape(3, 3)), Tensor(Shape(2))}) == 0.0);
  CHECK(global_norm(std::vector<Tensor>{}) == 0.0);
}

TEST_CASE("global_norm is invariant under re-partitioning") {
  Rng rng(5);
  std::vector<double> flat(24);
  for (double& v : flat) v = rng.gaussian();
  const std::vector<Tensor> one{Tensor(Shape(24), flat)};
  const std::vector<Tensor> split{Tensor(Shape(4, 3), std::vector<double>(flat.begin(), flat.begin() + 12)),
                                  Tensor(Shape(2), std::vector<double>(flat.begin() + 12, flat.begin() + 14)),
                                  Tensor(Shape(5, 2), std::vector<double>(flat.begin() + 14, flat.end()))};
  CHECK(global_norm(one) == doctest::Approx(global_norm(split)).epsilon(1e-15));
}

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  CHECK(Rng::derive_seed(1, 2) == Rng::derive_seed(1, 2));
  CHECK(Rng::derive_seed(1, 2) != Rng::derive_seed(1, 3));
  CHECK(Rng::derive_seed(1, 2) != Rng::derive_seed(2, 2));
}

TEST_CASE("uniform_index stays in range") {
  Rng rng(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) CHECK(h > 800);
  CHECK_THROWS(rng.uniform_index(0));
}

TEST_CASE("gaussian_tensor") {
  SUBCASE("zero stddev is constant") {
    Rng rng(1);
    CHECK(gaussian_tensor(rng, Shape(3), 0.0, 0.0) == Tensor::vector({0, 0, 0}));
    CHECK(gaussian_tensor(rng, Shape(2), 1.5, 0.0) == Tensor::vector({1.5, 1.5}));
  }
  SUBCASE("negative stddev rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(gaussian_tensor(rng, Shape(3), 0.0, -1.0), std::invalid_argument);
  }
  SUBCASE("same seed reproduces bit-exactly") {
    Rng a(77), b(77);
    CHECK(gaussian_tensor(a, Shape(50, 20), 0.3, 1.7) == gaussian_tensor(b, Shape(50, 20), 0.3, 1.7));
  }
  SUBCASE("moments over 10^6 draws") {
    Rng rng(123);
    const std::size_t n = 1'000'000;
    const auto t = gaussian_tensor(rng, Shape(n), 0.0, 2.0);
    double sum = 0.0, sq = 0.0;
    for (double v : t.data()) {
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 4.0 * 2.0 / std::sqrt(double(n)));
    CHECK(sd >= 1.994);
    CHECK(sd <= 2.006);
  }
}

TEST_CASE("gaussian draws pass a 16-bin chi-square test against N(0,1)") {
  // Equal-probability bins via the normal CDF; critical value of chi^2 with
  // 15 degrees of freedom at significance 1e-4 is 44.263.
  Rng rng(31337);
  const std::size_t n = 100'000;
  std::vector<double> counts(16, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bin = std::min<std::size_t>(15, static_cast<std::size_t>(16.0 * phi(rng.gaussian())));
    counts[bin] += 1.0;
  }
  const double expected = n / 16.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 44.263);
}
