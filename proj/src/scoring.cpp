#include "hypox/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypox/csv.hpp"
#include "hypox/embedded_tables.hpp"

namespace hypox::scoring {

namespace {

constexpr Range kSpo2Domain{0.0, 100.0};

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::InvalidInput, msg); }

BinSide parse_side(std::string_view s) {
  if (s == "low") return BinSide::Low;
  if (s == "normal") return BinSide::Normal;
  if (s == "high") return BinSide::High;
  throw Error(ErrorKind::Schema, "unknown bin side '" + std::string(s) + "'");
}

int parse_level(std::string_view s) {
  auto v = csv::parse_optional_double(s);
  if (!v || *v < 0 || *v > 3 || std::floor(*v) != *v) {
    throw Error(ErrorKind::Schema, "bin level must be 0..3, got '" + std::string(s) + "'");
  }
  return static_cast<int>(*v);
}

std::int64_t to_ticks(double v, double scale) { return std::llround(v * scale); }

const SeverityBin& lookup(const std::vector<SeverityBin>& bins, double value, Range domain,
                          std::string_view what) {
  if (!std::isfinite(value) || value < domain.lo || value > domain.hi) {
    invalid(std::string(what) + " value " + csv::format_double(value) + " outside [" +
            csv::format_double(domain.lo) + ", " + csv::format_double(domain.hi) + "]");
  }
  // Last bin whose lower edge is <= value.
  auto it = std::upper_bound(bins.begin(), bins.end(), value,
                             [](double v, const SeverityBin& b) { return v < b.lo; });
  return *std::prev(it);
}

}  // namespace

std::string_view age_band_name(AgeBand band) {
  switch (band) {
    case AgeBand::Infant0to11m: return "infant_0_11m";
    case AgeBand::Toddler12to23m: return "toddler_12_23m";
    case AgeBand::Child2to4y: return "child_2_4y";
    case AgeBand::Child5to11y: return "child_5_11y";
    case AgeBand::Adolescent12to17y: return "adolescent_12_17y";
    case AgeBand::Adult18plus: return "adult_18plus";
  }
  return "?";
}

std::optional<AgeBand> parse_age_band(std::string_view name) {
  for (auto b : kAllAgeBands) {
    if (age_band_name(b) == name) return b;
  }
  return std::nullopt;
}

std::string_view group_name(PopulationGroup group) {
  switch (group) {
    case PopulationGroup::AdultNoCopd: return "adult_no_copd";
    case PopulationGroup::AdultCopd: return "adult_copd";
    case PopulationGroup::PediatricNoCopd: return "pediatric_no_copd";
  }
  return "?";
}

std::optional<PopulationGroup> parse_group(std::string_view name) {
  for (auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  return std::nullopt;
}

std::string_view side_name(BinSide side) {
  switch (side) {
    case BinSide::Low: return "low";
    case BinSide::Normal: return "normal";
    case BinSide::High: return "high";
  }
  return "?";
}

std::string_view anomaly_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::Overlap: return "overlap";
    case AnomalyKind::Gap: return "gap";
    case AnomalyKind::TopExtension: return "top_extension";
  }
  return "?";
}

double table_resolution(VitalKind kind) { return kind == VitalKind::Temperature ? 0.1 : 1.0; }

std::vector<SeverityBin> normalize_bands(std::span<const SourceBand> bands, Range domain,
                                         double resolution, std::vector<Anomaly>* anomalies) {
  if (bands.empty()) {
    throw Error(ErrorKind::Schema, "empty scoring table");
  }
  const double scale = 1.0 / resolution;
  const std::int64_t first = to_ticks(domain.lo, scale);
  const std::int64_t last = to_ticks(domain.hi, scale);
  const auto n = static_cast<std::size_t>(last - first + 1);

  // Each tick t stands for the real interval [t, t+1) in table units, which
  // is how a listed lower edge comes to own everything up to the next edge.
  std::vector<std::vector<std::size_t>> cover(n);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto& band = bands[b];
    std::int64_t lo = band.lo ? to_ticks(*band.lo, scale) : first;
    std::int64_t hi = band.hi ? to_ticks(*band.hi, scale) : last;
    lo = std::max(lo, first);
    hi = std::min(hi, last);
    if (lo > hi) {
      throw Error(ErrorKind::Schema, "band for " + band.table + "/" +
                                         std::string(vital_name(band.vital)) +
                                         " lies outside the sanitized domain");
    }
    for (std::int64_t t = lo; t <= hi; ++t) cover[static_cast<std::size_t>(t - first)].push_back(b);
  }

  struct Cell {
    int level = -1;
    BinSide side = BinSide::Normal;
  };
  std::vector<Cell> cells(n);
  const auto table = bands.front().table;
  const auto vital = bands.front().vital;
  auto tick_value = [&](std::size_t i) { return static_cast<double>(first + static_cast<std::int64_t>(i)) / scale; };

  for (std::size_t i = 0; i < n; ++i) {
    for (auto b : cover[i]) {
      if (bands[b].level > cells[i].level) {
        cells[i] = {bands[b].level, bands[b].side};
      }
    }
  }

  // Overlap report: maximal runs of multiply-covered ticks with the same band set.
  for (std::size_t i = 0; i < n;) {
    if (cover[i].size() < 2) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && cover[j + 1] == cover[i]) ++j;
    if (anomalies) {
      Anomaly a{table, vital, AnomalyKind::Overlap, tick_value(i), tick_value(j + 1), {}, cells[i].level};
      for (auto b : cover[i]) a.candidate_levels.push_back(bands[b].level);
      anomalies->push_back(std::move(a));
    }
    i = j + 1;
  }

  // Gaps take the more severe neighbour; a gap at the top extends the band below.
  for (std::size_t i = 0; i < n;) {
    if (!cover[i].empty()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && cover[j + 1].empty()) ++j;
    const bool has_prev = i > 0;
    const bool has_next = j + 1 < n;
    Cell fill;
    AnomalyKind kind = AnomalyKind::Gap;
    std::vector<int> candidates;
    if (has_prev) candidates.push_back(cells[i - 1].level);
    if (has_next) candidates.push_back(cells[j + 1].level);
    if (has_prev && has_next) {
      fill = cells[j + 1].level > cells[i - 1].level ? cells[j + 1] : cells[i - 1];
    } else if (has_prev) {
      fill = cells[i - 1];
      kind = AnomalyKind::TopExtension;
    } else if (has_next) {
      fill = cells[j + 1];
    } else {
      throw Error(ErrorKind::Schema, "scoring table covers nothing");
    }
    for (std::size_t k = i; k <= j; ++k) cells[k] = fill;
    if (anomalies) {
      const double hi = has_next ? tick_value(j + 1) : domain.hi;
      anomalies->push_back({table, vital, kind, tick_value(i), hi, candidates, fill.level});
    }
    i = j + 1;
  }

  std::vector<SeverityBin> bins;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && cells[j + 1].level == cells[i].level && cells[j + 1].side == cells[i].side) ++j;
    const double hi = (j + 1 < n) ? tick_value(j + 1) : domain.hi;
    bins.push_back({cells[i].side, cells[i].level, tick_value(i), hi});
    i = j + 1;
  }
  if (anomalies) {
    std::stable_sort(anomalies->begin(), anomalies->end(),
                     [](const Anomaly& a, const Anomaly& b) {
                       return std::tie(a.table, a.vital, a.lo) < std::tie(b.table, b.vital, b.lo);
                     });
  }
  return bins;
}

std::vector<SourceBand> parse_tag_csv(std::string_view text) {
  const auto t = csv::Table::parse(text);
  const auto c_band = t.require("age_band");
  const auto c_vital = t.require("vital");
  const auto c_side = t.require("bin_side");
  const auto c_level = t.require("bin_level");
  const auto c_lo = t.require("lo");
  const auto c_hi = t.require("hi");
  std::vector<SourceBand> out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto& r = t.row(i);
    if (!parse_age_band(r[c_band])) {
      throw Error(ErrorKind::Schema, "unknown age band '" + r[c_band] + "'");
    }
    auto vital = parse_vital(r[c_vital]);
    if (!vital) throw Error(ErrorKind::Schema, "unknown vital '" + r[c_vital] + "'");
    out.push_back({r[c_band], *vital, parse_side(r[c_side]), parse_level(r[c_level]),
                   csv::parse_optional_double(r[c_lo]), csv::parse_optional_double(r[c_hi])});
  }
  return out;
}

std::vector<SourceBand> parse_threshold_csv(std::string_view text) {
  const auto t = csv::Table::parse(text);
  const auto c_pop = t.require("population");
  const auto c_level = t.require("bin_level");
  const auto c_lo = t.require("lo");
  const auto c_hi = t.require("hi");
  std::vector<SourceBand> out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto& r = t.row(i);
    if (!parse_group(r[c_pop])) {
      throw Error(ErrorKind::Schema, "unknown population '" + r[c_pop] + "'");
    }
    const int level = parse_level(r[c_level]);
    out.push_back({r[c_pop], VitalKind::SpO2, level == 0 ? BinSide::Normal : BinSide::Low, level,
                   csv::parse_optional_double(r[c_lo]), csv::parse_optional_double(r[c_hi])});
  }
  return out;
}

const ScoringMatrix& ScoringMatrix::builtin() {
  static const ScoringMatrix matrix = from_csv(embedded::kTagCsv, embedded::kThresholdCsv);
  return matrix;
}

ScoringMatrix ScoringMatrix::from_csv(std::string_view tag_csv, std::string_view threshold_csv,
                                      const SanitizeRanges& ranges) {
  ScoringMatrix m;
  m.ranges_ = ranges;
  m.source_tags_ = parse_tag_csv(tag_csv);

  for (auto band : kAllAgeBands) {
    for (auto vital : kAllVitals) {
      std::vector<SourceBand> subset;
      for (const auto& s : m.source_tags_) {
        if (s.table == age_band_name(band) && s.vital == vital) subset.push_back(s);
      }
      if (subset.empty()) {
        throw Error(ErrorKind::Schema, "no bands for " + std::string(age_band_name(band)) + "/" +
                                           std::string(vital_name(vital)));
      }
      if (subset.size() > 7) {
        throw Error(ErrorKind::Schema, "more than 7 bands for " + std::string(age_band_name(band)));
      }
      if (vital == VitalKind::SpO2 &&
          std::any_of(subset.begin(), subset.end(), [](auto& s) { return s.side == BinSide::High; })) {
        throw Error(ErrorKind::Schema, "SpO2 tables have no high-side bands");
      }
      m.tags_[{band, vital}] =
          normalize_bands(subset, ranges[vital], table_resolution(vital), &m.anomalies_);
    }
  }

  const auto thresholds = parse_threshold_csv(threshold_csv);
  for (auto group : kAllGroups) {
    std::vector<SourceBand> subset;
    for (const auto& s : thresholds) {
      if (s.table == group_name(group)) subset.push_back(s);
    }
    if (subset.size() != 4) {
      throw Error(ErrorKind::Schema, "expected 4 hypoxemia bands for " + std::string(group_name(group)));
    }
    m.thresholds_[group] = normalize_bands(subset, kSpo2Domain, 1.0, &m.anomalies_);
  }
  return m;
}

const std::vector<SeverityBin>& ScoringMatrix::bins(AgeBand band, VitalKind kind) const {
  return tags_.at({band, kind});
}

const std::vector<SeverityBin>& ScoringMatrix::thresholds(PopulationGroup group) const {
  return thresholds_.at(group);
}

TagScore ScoringMatrix::tag_score(VitalKind kind, double value, AgeBand band) const {
  return lookup(bins(band, kind), value, ranges_[kind], vital_name(kind)).level;
}

SeverityLabel ScoringMatrix::severity_label(double spo2_pct, PopulationGroup group) const {
  return lookup(thresholds(group), spo2_pct, kSpo2Domain, "spo2").level;
}

nlohmann::json ScoringMatrix::dump() const {
  using nlohmann::json;
  auto bins_json = [](const std::vector<SeverityBin>& bins) {
    json arr = json::array();
    for (const auto& b : bins) {
      arr.push_back({{"side", side_name(b.side)}, {"level", b.level}, {"lo", b.lo}, {"hi", b.hi}});
    }
    return arr;
  };
  json tags = json::object();
  for (auto band : kAllAgeBands) {
    json per = json::object();
    for (auto vital : kAllVitals) per[std::string(vital_name(vital))] = bins_json(bins(band, vital));
    tags[std::string(age_band_name(band))] = std::move(per);
  }
  json thr = json::object();
  for (auto g : kAllGroups) thr[std::string(group_name(g))] = bins_json(thresholds(g));
  json anomalies = json::array();
  for (const auto& a : anomalies_) {
    anomalies.push_back({{"table", a.table},
                         {"vital", vital_name(a.vital)},
                         {"kind", anomaly_name(a.kind)},
                         {"lo", a.lo},
                         {"hi", a.hi},
                         {"candidate_levels", a.candidate_levels},
                         {"resolved_level", a.resolved_level}});
  }
  return {{"schema", "hypox.scoring_matrix/1"},
          {"interval_convention", "[lo, hi); last bin closed at domain max"},
          {"tags", std::move(tags)},
          {"hypoxemia_thresholds", std::move(thr)},
          {"normalization_report", std::move(anomalies)}};
}

AgeBand age_band(double age_years) {
  if (!std::isfinite(age_years) || age_years < 0) {
    invalid("age must be finite and non-negative");
  }
  if (age_years < 1) return AgeBand::Infant0to11m;
  if (age_years < 2) return AgeBand::Toddler12to23m;
  if (age_years < 5) return AgeBand::Child2to4y;
  if (age_years < 12) return AgeBand::Child5to11y;
  if (age_years < 18) return AgeBand::Adolescent12to17y;
  return AgeBand::Adult18plus;
}

PopulationGroup classify_population(double age_years, bool copd) {
  const bool adult = age_band(age_years) == AgeBand::Adult18plus;
  if (adult) return copd ? PopulationGroup::AdultCopd : PopulationGroup::AdultNoCopd;
  if (copd) {
    throw Error(ErrorKind::UnsupportedPopulation,
                "pediatric patients with COPD have no hypoxemia threshold table");
  }
  return PopulationGroup::PediatricNoCopd;
}

SeverityLabel severity_label(double spo2_pct, PopulationGroup group) {
  return ScoringMatrix::builtin().severity_label(spo2_pct, group);
}

TagScore tag_score(VitalKind kind, double value, AgeBand band) {
  return ScoringMatrix::builtin().tag_score(kind, value, band);
}

TagVector tag_vector(const VitalRecord& vitals, AgeBand band, const ScoringMatrix& matrix) {
  TagVector out{};
  for (std::size_t i = 0; i < kVitalCount; ++i) {
    if (!vitals[i]) {
      throw Error(ErrorKind::MissingInput,
                  "missing " + std::string(vital_name(kAllVitals[i])) + " (impute before scoring)");
    }
    out[i] = matrix.tag_score(kAllVitals[i], *vitals[i], band);
  }
  return out;
}

std::vector<AlarmRun> alarm_runs(std::span<const TagScore> series, VitalKind vital,
                                 std::int64_t origin_minute) {
  std::vector<AlarmRun> runs;
  for (std::size_t i = 0; i < series.size();) {
    if (series[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < series.size() && series[j] == series[i]) ++j;
    runs.push_back({vital, origin_minute + static_cast<std::int64_t>(i), static_cast<int>(j - i), series[i]});
    i = j;
  }
  return runs;
}

}  // namespace hypox::scoring
