#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/matrix.hpp"

namespace hypox::analysis {

/// Pearson correlations over pairwise-complete rows. Entries involving a
/// zero-variance column are NaN (undefined) and serialize as null.
struct CorrelationMatrix {
  std::vector<std::string> names;
  Matrix r;
  std::vector<bool> zero_variance;

  [[nodiscard]] nlohmann::json to_json() const;
  void write_csv(const std::string& path, const std::string& provenance) const;
};

CorrelationMatrix correlation_matrix(const Matrix& x, std::vector<std::string> names = {});

struct Eigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops
/// below `tolerance`. Throws Error(InvalidInput) for non-square or
/// non-symmetric input.
Eigen jacobi_eigen(const Matrix& symmetric, double tolerance = 1e-10, int max_sweeps = 100);

struct PcaResult {
  std::vector<std::string> names;
  Matrix covariance;
  std::vector<double> eigenvalues;
  std::vector<double> explained_ratio;
  Matrix components;  // row k is component k; largest-magnitude entry positive
  Matrix loadings;    // components scaled by sqrt(eigenvalue)

  [[nodiscard]] nlohmann::json to_json() const;
  void write_csv(const std::string& path, const std::string& provenance) const;
};

/// PCA of the covariance of `x`. With `standardize`, columns are z-scored
/// first (zero-variance columns are only centred).
PcaResult pca(const Matrix& x, std::vector<std::string> names = {}, bool standardize = true);

}  // namespace hypox::analysis
