#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"
#include "hypox/csv.hpp"
#include "hypox/frame.hpp"

namespace hypox::pipeline {

struct RawRecord {
  std::string subject_id;
  std::string hadm_id;
  Minute charttime = 0;
  Row values = missing_row();  // MAP and BMI stay missing
};

/// Parses the raw input schema
/// `subject_id,hadm_id,charttime,heart_rate,resp_rate,spo2,sbp,dbp,temperature,age,gender,height,weight,race,copd`.
/// Schema violations throw Error(Schema) naming the offending line.
std::vector<RawRecord> parse_raw_csv(const csv::Table& table);
std::vector<RawRecord> read_raw_csv(const std::string& path);

/// Groups records by admission, keeping input order within and across groups.
std::vector<std::vector<RawRecord>> group_by_admission(const std::vector<RawRecord>& records);

/// One row per charttime. For a repeated charttime the last non-null value of
/// each column wins. Demographics are made constant across the admission
/// using the most recent observed value.
AdmissionSeries merge_same_charttime(std::span<const RawRecord> records);

/// Out-of-range vitals become missing. Returns the number of cells cleared.
std::size_t sanitize(AdmissionSeries& series, const SanitizeRanges& ranges = {});

struct FilterConfig {
  double row_missing_drop_fraction = 0.76;   // drop rows with >= this fraction missing
  double admission_min_present = 0.8645;     // keep admissions with >= this fraction present
  Minute max_gap_minutes = 60;               // drop admissions with a larger successive gap
  std::size_t min_rows = 30;                 // drop admissions with fewer rows
};

struct StageCount {
  std::string stage;
  std::size_t rows_before = 0;
  std::size_t rows_after = 0;
  std::size_t admissions_before = 0;
  std::size_t admissions_after = 0;
  std::size_t cells_cleared = 0;
};

struct LabelDistribution {
  std::array<std::size_t, kNumClasses> counts{};
  [[nodiscard]] std::size_t total() const;
  [[nodiscard]] double percent(int label) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

struct DurationStats {
  std::size_t runs = 0;
  double mean = 0.0;
  double median = 0.0;
};

struct PipelineReport {
  std::vector<StageCount> stages;
  std::size_t missing_cells = 0;  // feature cells missing before imputation
  std::size_t feature_cells = 0;
  std::optional<LabelDistribution> labels_before_interpolation;
  std::optional<LabelDistribution> labels_after_interpolation;
  std::map<int, DurationStats> label_durations;

  /// Commutative merge of per-chunk reports (stage lists must align).
  void merge(const PipelineReport& other);
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Columns counted for missingness in the row and admission filters.
std::span<const Column> feature_columns();

/// Inclusion filters in fixed order: sparse rows, short admissions, sparse
/// admissions, gapped admissions, short admissions again.
std::vector<AdmissionSeries> filter_admissions(std::vector<AdmissionSeries> series, PipelineReport& report,
                                               const FilterConfig& config = {});

/// Linear interpolation onto the one-minute grid. Original rows keep their
/// values bit-exact and their imputation masks; new rows are fully masked.
MaskedFrame interpolate_minutes(const AdmissionSeries& series);

/// Post-interpolation sanitize; clears and counts out-of-range vitals.
std::size_t sanitize(MaskedFrame& frame, const SanitizeRanges& ranges = {});

/// RR/HR/SBP/DBP/SpO2 to integers; temperature, MAP, BMI, weight and height
/// to one decimal. Halves round away from zero.
void round_values(MaskedFrame& frame);
double round_to(double value, int decimals);

double derive_map(double sbp, double dbp);
double derive_bmi(double weight_kg, double height_cm);

/// Fills MAP and BMI from their source columns. Masks are the OR of the
/// source masks.
void add_derived_columns(AdmissionSeries& series);

/// Run-length statistics per label value.
std::map<int, DurationStats> label_duration_stats(std::span<const int> labels);

LabelDistribution label_distribution(std::span<const int> labels);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are
/// rethrown (first by index).
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace hypox::pipeline
