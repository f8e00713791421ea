#include <doctest.h>

#include <cmath>
#include <random>

#include "hypox/analysis.hpp"
#include "oracles.hpp"

using namespace hypox;
using namespace hypox::analysis;

TEST_CASE("correlation matrix") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0, 1);
  Matrix x(10, 4);
  for (std::size_t r = 0; r < 10; ++r) {
    x(r, 0) = z(rng);
    x(r, 1) = x(r, 0);
    x(r, 2) = -x(r, 0);
    x(r, 3) = z(rng) + 0.5 * x(r, 0);
  }
  auto c = correlation_matrix(x);
  CHECK(c.r(0, 1) == 1.0);
  CHECK(c.r(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c.r(i, i) == 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(c.r(i, j) == c.r(j, i));
      CHECK(std::abs(c.r(i, j)) <= 1.0);
    }
  }
  // Definitional oracle: covariance over product of population std devs.
  auto mean = [&](std::size_t col) {
    double s = 0;
    for (std::size_t r = 0; r < 10; ++r) s += x(r, col);
    return s / 10;
  };
  const double m0 = mean(0), m3 = mean(3);
  double cov = 0, v0 = 0, v3 = 0;
  for (std::size_t r = 0; r < 10; ++r) {
    cov += (x(r, 0) - m0) * (x(r, 3) - m3) / 10;
    v0 += (x(r, 0) - m0) * (x(r, 0) - m0) / 10;
    v3 += (x(r, 3) - m3) * (x(r, 3) - m3) / 10;
  }
  CHECK(c.r(0, 3) == doctest::Approx(cov / std::sqrt(v0 * v3)).epsilon(1e-12));

  Matrix k(5, 2, 3.0);
  for (std::size_t r = 0; r < 5; ++r) k(r, 1) = static_cast<double>(r);
  auto kc = correlation_matrix(k, {"const", "ramp"});
  CHECK(std::isnan(kc.r(0, 1)));
  CHECK(kc.zero_variance[0]);
  CHECK(kc.to_json()["pearson"][0][1].is_null());
  CHECK_THROWS_AS(correlation_matrix(Matrix(1, 2)), Error);
}

TEST_CASE("pca on rank-1 and isotropic data") {
  Matrix line(50, 2);
  for (std::size_t r = 0; r < 50; ++r) {
    line(r, 0) = static_cast<double>(r);
    line(r, 1) = 3.0 * static_cast<double>(r) + 1;
  }
  auto p = pca(line);
  CHECK(p.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(p.explained_ratio[1]) < 1e-9);

  Matrix iso(4, 2);
  const double pts[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (std::size_t r = 0; r < 4; ++r) {
    iso(r, 0) = pts[r][0];
    iso(r, 1) = pts[r][1];
  }
  auto q = pca(iso);
  CHECK(q.explained_ratio[0] == doctest::Approx(0.5));
  CHECK(q.explained_ratio[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(pca(Matrix(5, 1)), Error);
}

TEST_CASE("pca eigenvalues match the characteristic polynomial") {
  const double data[5][3] = {{2.5, 2.4, 1.0}, {0.5, 0.7, 2.1}, {2.2, 2.9, 0.3}, {1.9, 2.2, 1.7}, {3.1, 3.0, 0.2}};
  Matrix x(5, 3);
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = data[r][c];
  }
  auto p = pca(x);
  const Matrix& a = p.covariance;
  // det(lambda I - A) = lambda^3 - tr lambda^2 + m2 lambda - det
  const double tr = a(0, 0) + a(1, 1) + a(2, 2);
  const double m2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0) +
                    a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
  const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                     a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                     a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  const auto roots = testing::cubic_roots(-tr, m2, -det);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p.eigenvalues[k] - roots[k]) < 1e-8);
  double s = 0;
  for (double r : p.explained_ratio) s += r;
  CHECK(std::abs(s - 1.0) < 1e-9);
  CHECK(std::abs(p.eigenvalues[0] + p.eigenvalues[1] + p.eigenvalues[2] - tr) < 1e-9 * tr);
}

TEST_CASE("pca invariants on random data") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t p = 3 + static_cast<std::size_t>(trial);
    Matrix x(60, p);
    for (std::size_t r = 0; r < 60; ++r) {
      const double shared = z(rng);
      for (std::size_t c = 0; c < p; ++c) x(r, c) = shared * static_cast<double>(c % 3) + z(rng) * (1 + c);
    }
    auto res = pca(x, {}, trial % 2 == 0);
    // Orthonormal components.
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < p; ++k) dot += res.components(i, k) * res.components(j, k);
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
      }
      if (i + 1 < p) CHECK(res.explained_ratio[i] >= res.explained_ratio[i + 1]);
      double big = 0;
      for (std::size_t k = 0; k < p; ++k) {
        if (std::abs(res.components(i, k)) > std::abs(big)) big = res.components(i, k);
      }
      CHECK(big > 0);
    }
    // V diag(lambda) V^T reproduces the covariance.
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        double v = 0;
        for (std::size_t k = 0; k < p; ++k) v += res.components(k, i) * res.eigenvalues[k] * res.components(k, j);
        err += (v - res.covariance(i, j)) * (v - res.covariance(i, j));
        norm += res.covariance(i, j) * res.covariance(i, j);
      }
    }
    CHECK(std::sqrt(err / norm) < 1e-8);
  }
}

TEST_CASE("jacobi rejects bad input") {
  Matrix ns(2, 2);
  ns(0, 1) = 1;
  CHECK_THROWS_AS(jacobi_eigen(ns), Error);
  CHECK_THROWS_AS(jacobi_eigen(Matrix(2, 3)), Error);
  Matrix d(2, 2);
  d(0, 0) = 1;
  d(1, 1) = 3;
  auto e = jacobi_eigen(d);
  CHECK(e.values == std::vector<double>{3, 1});
  CHECK(e.sweeps == 0);
}
