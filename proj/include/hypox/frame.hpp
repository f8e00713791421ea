#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hypox/common.hpp"

namespace hypox {

// The first six columns coincide with VitalKind order.
enum class Column : std::uint8_t {
  RespRate,
  SpO2,
  HeartRate,
  Sbp,
  Dbp,
  Temperature,
  Age,
  Gender,
  Height,
  Weight,
  Race,
  Copd,
  Map,
  Bmi,
};

inline constexpr std::size_t kColumnCount = 14;
/// Columns present in raw input (everything except derived MAP and BMI).
inline constexpr std::size_t kRawColumnCount = 12;

constexpr std::size_t idx(Column c) { return static_cast<std::size_t>(c); }
constexpr Column column_of(VitalKind k) { return static_cast<Column>(static_cast<std::uint8_t>(k)); }

std::string_view column_name(Column c);
std::optional<Column> parse_column(std::string_view name);

/// Demographic columns are constant within an admission.
bool is_demographic(Column c);
/// Categorical columns are imputed by mode rather than regression.
bool is_categorical(Column c);

/// Race/ethnicity categories. The last one doubles as the fallback for
/// unrecognised labels.
inline constexpr std::array<std::string_view, 8> kRaceCategories = {
    "White",
    "Black / African American",
    "Hispanic / Latino",
    "Asian",
    "American Indian / Alaska Native",
    "Native Hawaiian / Other Pacific Islander",
    "Multiracial",
    "Undefined",
};
inline constexpr int kRaceUndefined = 7;

int parse_race(std::string_view label);

using Row = std::array<double, kColumnCount>;
using MaskRow = std::array<std::uint8_t, kColumnCount>;

inline Row missing_row() {
  Row r;
  r.fill(std::nan(""));
  return r;
}

/// Minutes since 1970-01-01 00:00 UTC.
using Minute = std::int64_t;

/// "YYYY-MM-DD HH:MM" or "YYYY-MM-DDTHH:MM", optionally with ":00" seconds.
/// Non-zero seconds or fractional parts are rejected.
Minute parse_charttime(std::string_view text);
std::string format_charttime(Minute m);

/// One admission's rows in strictly increasing charttime order. NaN marks a
/// missing cell; masks flag imputed (synthetic) cells.
struct AdmissionSeries {
  std::string subject_id;
  std::string hadm_id;
  std::vector<Minute> minutes;
  std::vector<Row> rows;
  std::vector<MaskRow> masks;

  [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
};

/// Minute-grid admission. charttime_mask[i] = 1 marks an interpolated row.
struct MaskedFrame : AdmissionSeries {
  std::vector<std::uint8_t> charttime_mask;
};

/// Columns of the frame CSV: identifiers, charttime, the 14 values, one
/// mask_<column> per value column and mask_charttime.
std::vector<std::string> frame_csv_header();

void write_frames_csv(const std::string& path, const std::vector<MaskedFrame>& frames,
                      const std::string& provenance_comment);
std::vector<MaskedFrame> read_frames_csv(const std::string& path);

MaskedFrame as_frame(const AdmissionSeries& s);

}  // namespace hypox
