#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hypox/matrix.hpp"

namespace hypox::testing {

/// One informative feature x in [0, 1); class = quartile of x. Extra
/// columns are uniform noise.
struct Separable {
  Matrix x;
  std::vector<int> y;
};

inline Separable quartile_data(std::size_t n, std::size_t noise_cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Separable d{Matrix(n, 1 + noise_cols), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double v = u(rng);
    d.x(i, 0) = v;
    for (std::size_t c = 0; c < noise_cols; ++c) d.x(i, 1 + c) = u(rng);
    d.y[i] = std::min(3, static_cast<int>(v * 4.0));
  }
  return d;
}

}  // namespace hypox::testing
