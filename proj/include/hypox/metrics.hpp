#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/matrix.hpp"

namespace hypox::metrics {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

/// Multiclass MCC (Gorodkin R_K). A zero denominator yields 0.
double mcc(const ConfusionMatrix& c);

/// Probability that a random positive outranks a random negative, ties
/// counted as one half. Throws Error(UndefinedMetric) unless both groups
/// are non-empty.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Step-wise sum of (R_k - R_{k-1}) * P_k over descending distinct
/// thresholds. Throws Error(UndefinedMetric) without positives.
double auprc(std::span<const double> scores, std::span<const std::uint8_t> positive);

double auroc_ovr(std::span<const int> y_true, const Matrix& scores, int cls);
double auprc_ovr(std::span<const int> y_true, const Matrix& scores, int cls);

struct ClassMetrics {
  std::size_t support = 0;
  double precision = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;
  std::optional<double> auprc;
};

struct ClassificationReport {
  ConfusionMatrix confusion{};
  std::array<ClassMetrics, kNumClasses> per_class{};
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_sensitivity = 0.0;
  double macro_specificity = 0.0;
  double macro_f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_sensitivity = 0.0;
  double weighted_f1 = 0.0;
  double mcc = 0.0;
  std::optional<double> macro_auroc;
  std::optional<double> macro_auprc;
  /// Quantities whose denominator was zero and were set to 0, e.g. "precision[2]".
  std::vector<std::string> zero_division;

  /// Values rounded to 4 decimals.
  [[nodiscard]] nlohmann::json to_json() const;
  static std::vector<std::string> csv_header();
  [[nodiscard]] std::vector<std::string> csv_row(const std::string& model) const;
};

ClassificationReport report(const ConfusionMatrix& c);
/// With per-class probability columns for AUROC/AUPRC.
ClassificationReport report(const ConfusionMatrix& c, std::span<const int> y_true, const Matrix& scores);

double round4(double v);

}  // namespace hypox::metrics
