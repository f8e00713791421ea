#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/frame.hpp"
#include "hypox/gbdt.hpp"
#include "hypox/matrix.hpp"

namespace hypox::impute {

/// Regression-mode GBDT with 100 rounds.
gbdt::GbdtConfig default_regressor();

struct ImputeConfig {
  int n_iterations = 5;
  double tolerance = 1e-3;  // max |change| of imputed cells, in column standard deviations
  gbdt::GbdtConfig regressor = default_regressor();
  /// Rows used to fit each column model; 0 means all observed rows. Larger
  /// sets are subsampled deterministically from the regressor seed.
  std::size_t max_train_rows = 20000;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static ImputeConfig from_json(const nlohmann::json& j, ImputeConfig base);
};

struct ColumnSpec {
  std::string name;
  bool categorical = false;
  std::optional<Range> clamp;
};

struct MiceResult {
  Matrix values;                      // no NaN
  std::vector<std::uint8_t> mask;     // row-major, 1 where the input was NaN
  int sweeps = 0;
  bool converged = false;
  nlohmann::json audit;               // per-sweep, per-column mean absolute change
};

/// Median for numeric columns, mode for categorical ones. Returns the fill
/// values. A column with no observed value throws Error(UnimputableColumn).
std::vector<double> initial_fill(Matrix& x, std::span<const ColumnSpec> columns);
std::vector<double> initial_fill(Matrix& x);

/// Chained-equations imputation: columns with missing cells are visited in
/// ascending missingness order and regressed on all other columns.
MiceResult mice(const Matrix& x, std::span<const ColumnSpec> columns, const ImputeConfig& config);

/// Imputes the raw columns of every admission in place, ORs the imputation
/// masks into the series masks and harmonises imputed demographics within
/// each admission (mean, or mode for categorical columns). Returns the audit.
nlohmann::json impute_admissions(std::vector<AdmissionSeries>& series, const ImputeConfig& config,
                                 const SanitizeRanges& ranges = {});

}  // namespace hypox::impute
