#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/frame.hpp"
#include "hypox/matrix.hpp"
#include "hypox/scoring.hpp"

namespace hypox::dataset {

inline constexpr std::size_t kFeatureCount = 41;
/// Leading feature columns that are z-scored: vitals, age, weight, height,
/// BMI and MAP.
inline constexpr std::size_t kContinuousFeatures = 11;

/// GBM feature names in export order.
const std::vector<std::string>& feature_names();

/// Row t receives labels[t + lag]; the last `lag` rows are dropped.
template <typename T>
std::vector<T> shift_labels(std::span<const T> labels, std::size_t lag) {
  if (lag == 0) throw Error(ErrorKind::InvalidInput, "shift lag must be positive");
  if (labels.size() <= lag) return {};
  return std::vector<T>(labels.begin() + static_cast<std::ptrdiff_t>(lag), labels.end());
}

struct WindowBatch {
  std::size_t width = 5;
  std::size_t stride = 1;
  std::vector<std::size_t> starts;  // window k covers rows [starts[k], starts[k] + width)
  std::vector<int> targets;         // shifted label at the window's last row

  [[nodiscard]] std::size_t size() const noexcept { return starts.size(); }
};

WindowBatch sliding_windows(std::span<const int> shifted_labels, std::size_t width = 5, std::size_t stride = 1);

struct PaddedSequence {
  Matrix rows;                      // target_len x cols
  std::vector<std::uint8_t> valid;  // 1 for real rows, 0 for padding

  [[nodiscard]] std::size_t real_rows() const;
};

std::vector<PaddedSequence> pad_and_segment(const Matrix& frame, std::size_t target_len = 1024,
                                            double pad_value = 1000.0);

/// Column z-scoring with statistics from one (training) matrix. A zero
/// standard deviation is treated as 1.
struct Standardizer {
  std::vector<std::size_t> columns;
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const Matrix& train, std::span<const std::size_t> columns);
  void apply(Matrix& x) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

enum class Split : std::uint8_t { Train, Validation, Test };
std::string_view split_name(Split s);

struct SplitFractions {
  double train = 0.75;
  double validation = 0.125;
  double test = 0.125;
  /// Throws Error(Config) unless the fractions are non-negative and sum to 1.
  void validate() const;
};

struct SplitAssignment {
  std::map<std::string, Split> by_subject;
  std::uint64_t seed = 0;
  SplitFractions fractions;

  [[nodiscard]] Split of(const std::string& subject_id) const;
  [[nodiscard]] std::array<std::size_t, 3> counts() const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Shuffles the distinct ids with `seed`, then apportions patients by largest
/// remainder so each part is within one patient of n * fraction.
SplitAssignment split_patients(std::span<const std::string> subject_ids, const SplitFractions& fractions,
                               std::uint64_t seed);

/// w_c = N / (K * n_c). Throws Error(DegenerateClass) when a class is absent.
std::array<double, kNumClasses> class_weights(std::span<const int> labels);

/// Feature rows of one admission with the unshifted severity label per row.
struct AdmissionFeatures {
  std::string subject_id;
  std::string hadm_id;
  std::vector<Minute> minutes;
  std::vector<std::uint8_t> charttime_mask;
  Matrix x;
  std::vector<int> labels;
};

/// Builds the 41 features and severity labels of an imputed, interpolated
/// frame. Throws Error(UnsupportedPopulation) for pediatric COPD admissions
/// and Error(MissingInput) when a vital is missing.
AdmissionFeatures assemble_features(const MaskedFrame& frame,
                                    const scoring::ScoringMatrix& matrix = scoring::ScoringMatrix::builtin());

/// Shift-lagged single-row examples from several admissions.
struct LabeledRows {
  Matrix x;
  std::vector<int> y;
};

LabeledRows shifted_rows(std::span<const AdmissionFeatures> admissions, std::size_t lag);

struct DatasetConfig {
  std::size_t lag = 5;
  std::size_t window = 5;
  std::size_t sequence_length = 1024;
  double pad_value = 1000.0;
  bool export_sequences = true;
  SplitFractions fractions;

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j, DatasetConfig base);
};

struct BuiltDataset {
  SplitAssignment split;
  Standardizer standardizer;
  std::array<std::vector<AdmissionFeatures>, 3> admissions;  // standardized, by split
  std::array<LabeledRows, 3> rows;                            // standardized, by split
  std::vector<std::pair<std::string, std::string>> excluded;  // hadm_id, reason
  std::size_t windows = 0;                                    // 5-row windows over all splits

  [[nodiscard]] nlohmann::json manifest(const DatasetConfig& config) const;
};

/// Scores, splits by patient, fits the standardizer on train rows and
/// applies it everywhere. Pediatric COPD admissions are excluded and listed.
BuiltDataset build_dataset(const std::vector<MaskedFrame>& frames, const DatasetConfig& config, std::uint64_t seed,
                           int jobs = 1, const scoring::ScoringMatrix& matrix = scoring::ScoringMatrix::builtin());

void write_gbm_csv(const std::string& path, const LabeledRows& rows, const std::string& provenance);
LabeledRows read_gbm_csv(const std::string& path);

/// Header, then blocks of `sequence_length` rows per segment with a validity
/// column; pad rows carry the pad value in every numeric column.
void write_sequence_csv(const std::string& path, std::span<const AdmissionFeatures> admissions,
                        const DatasetConfig& config, const std::string& provenance);

}  // namespace hypox::dataset
