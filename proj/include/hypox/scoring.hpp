#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hypox/common.hpp"

namespace hypox::scoring {

enum class AgeBand : std::uint8_t {
  Infant0to11m,
  Toddler12to23m,
  Child2to4y,
  Child5to11y,
  Adolescent12to17y,
  Adult18plus,
};

inline constexpr std::array<AgeBand, 6> kAllAgeBands = {
    AgeBand::Infant0to11m, AgeBand::Toddler12to23m,    AgeBand::Child2to4y,
    AgeBand::Child5to11y,  AgeBand::Adolescent12to17y, AgeBand::Adult18plus,
};

// No pediatric-COPD member: that population has no threshold table.
enum class PopulationGroup : std::uint8_t { AdultNoCopd, AdultCopd, PediatricNoCopd };

inline constexpr std::array<PopulationGroup, 3> kAllGroups = {
    PopulationGroup::AdultNoCopd, PopulationGroup::AdultCopd, PopulationGroup::PediatricNoCopd};

enum class BinSide : std::uint8_t { Low, Normal, High };

std::string_view age_band_name(AgeBand band);
std::optional<AgeBand> parse_age_band(std::string_view name);
std::string_view group_name(PopulationGroup group);
std::optional<PopulationGroup> parse_group(std::string_view name);
std::string_view side_name(BinSide side);

using TagScore = int;
using SeverityLabel = int;
using TagVector = std::array<TagScore, kVitalCount>;
using VitalRecord = std::array<std::optional<double>, kVitalCount>;

/// Runtime interval [lo, hi); the last bin of a table is closed at hi.
struct SeverityBin {
  BinSide side = BinSide::Normal;
  int level = 0;
  double lo = 0.0;
  double hi = 0.0;
};

/// One row of the verbatim source tables. Open ends ("<=19", ">=70") have
/// no value on that side.
struct SourceBand {
  std::string table;  // age band or population name
  VitalKind vital = VitalKind::SpO2;
  BinSide side = BinSide::Normal;
  int level = 0;
  std::optional<double> lo;
  std::optional<double> hi;
};

enum class AnomalyKind : std::uint8_t { Overlap, Gap, TopExtension };

std::string_view anomaly_name(AnomalyKind kind);

/// A region of a source table that did not map to exactly one band and how
/// it was resolved.
struct Anomaly {
  std::string table;
  VitalKind vital = VitalKind::SpO2;
  AnomalyKind kind = AnomalyKind::Overlap;
  double lo = 0.0;  // real-valued region [lo, hi)
  double hi = 0.0;
  std::vector<int> candidate_levels;
  int resolved_level = 0;
};

/// Smallest recorded increment of a vital in the source tables.
double table_resolution(VitalKind kind);

/// Converts integer/one-decimal bands into a total half-open partition of
/// [domain.lo, domain.hi]. Overlaps take the more severe level; interior gaps
/// go to the more severe adjacent band; uncovered space above the top band
/// extends that band.
std::vector<SeverityBin> normalize_bands(std::span<const SourceBand> bands, Range domain,
                                         double resolution, std::vector<Anomaly>* anomalies);

std::vector<SourceBand> parse_tag_csv(std::string_view csv);
std::vector<SourceBand> parse_threshold_csv(std::string_view csv);

class ScoringMatrix {
 public:
  /// Tables compiled into the library.
  static const ScoringMatrix& builtin();
  static ScoringMatrix from_csv(std::string_view tag_csv, std::string_view threshold_csv,
                                const SanitizeRanges& ranges = {});

  [[nodiscard]] TagScore tag_score(VitalKind kind, double value, AgeBand band) const;
  [[nodiscard]] SeverityLabel severity_label(double spo2_pct, PopulationGroup group) const;

  [[nodiscard]] const std::vector<SeverityBin>& bins(AgeBand band, VitalKind kind) const;
  [[nodiscard]] const std::vector<SeverityBin>& thresholds(PopulationGroup group) const;
  [[nodiscard]] const std::vector<Anomaly>& anomalies() const noexcept { return anomalies_; }
  [[nodiscard]] const std::vector<SourceBand>& source_tags() const noexcept { return source_tags_; }

  /// Normalized intervals plus the anomaly report.
  [[nodiscard]] nlohmann::json dump() const;

 private:
  SanitizeRanges ranges_;
  std::map<std::pair<AgeBand, VitalKind>, std::vector<SeverityBin>> tags_;
  std::map<PopulationGroup, std::vector<SeverityBin>> thresholds_;
  std::vector<Anomaly> anomalies_;
  std::vector<SourceBand> source_tags_;
};

AgeBand age_band(double age_years);
PopulationGroup classify_population(double age_years, bool copd);

SeverityLabel severity_label(double spo2_pct, PopulationGroup group);
TagScore tag_score(VitalKind kind, double value, AgeBand band);

/// Scores all six vitals in VitalKind order; every vital must be present.
TagVector tag_vector(const VitalRecord& vitals, AgeBand band,
                     const ScoringMatrix& matrix = ScoringMatrix::builtin());

struct AlarmRun {
  VitalKind vital = VitalKind::SpO2;
  std::int64_t start_minute = 0;
  int duration_minutes = 0;
  TagScore score = 0;

  bool operator==(const AlarmRun&) const = default;
};

/// Maximal runs of an identical nonzero score. start_minute is relative to
/// `origin_minute`.
std::vector<AlarmRun> alarm_runs(std::span<const TagScore> series, VitalKind vital,
                                 std::int64_t origin_minute = 0);

}  // namespace hypox::scoring
