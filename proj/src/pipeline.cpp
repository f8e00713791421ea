#include "hypox/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>
#include <unordered_map>

namespace hypox::pipeline {

namespace {

constexpr std::array<Column, 11> kFeatureColumns = {
    Column::RespRate, Column::SpO2,   Column::HeartRate, Column::Sbp,    Column::Dbp,  Column::Temperature,
    Column::Age,      Column::Gender, Column::Height,    Column::Weight, Column::Race,
};

constexpr std::array<Column, 6> kRawDemographics = {Column::Age,    Column::Gender, Column::Height,
                                                    Column::Weight, Column::Race,   Column::Copd};

double parse_gender(const std::string& s) {
  if (s.empty()) return std::nan("");
  if (s == "M" || s == "m" || s == "Male" || s == "male" || s == "1") return 1.0;
  if (s == "F" || s == "f" || s == "Female" || s == "female" || s == "0") return 0.0;
  throw Error(ErrorKind::Schema, "unrecognised gender '" + s + "'");
}

double parse_flag(const std::string& s) {
  if (s.empty()) return std::nan("");
  if (s == "1" || s == "true" || s == "True" || s == "yes") return 1.0;
  if (s == "0" || s == "false" || s == "False" || s == "no") return 0.0;
  throw Error(ErrorKind::Schema, "unrecognised copd flag '" + s + "'");
}

std::size_t missing_in(const Row& r) {
  std::size_t n = 0;
  for (auto c : kFeatureColumns) n += std::isnan(r[idx(c)]) ? 1 : 0;
  return n;
}

std::size_t total_rows(const std::vector<AdmissionSeries>& v) {
  std::size_t n = 0;
  for (const auto& s : v) n += s.size();
  return n;
}

template <typename Keep>
std::vector<AdmissionSeries> keep_admissions(std::vector<AdmissionSeries> in, PipelineReport& report,
                                             const std::string& stage, Keep keep) {
  StageCount c{stage, total_rows(in), 0, in.size(), 0, 0};
  std::vector<AdmissionSeries> out;
  for (auto& s : in) {
    if (keep(s)) out.push_back(std::move(s));
  }
  c.rows_after = total_rows(out);
  c.admissions_after = out.size();
  report.stages.push_back(c);
  return out;
}

}  // namespace

std::vector<RawRecord> parse_raw_csv(const csv::Table& t) {
  const auto c_subject = t.require("subject_id");
  const auto c_hadm = t.require("hadm_id");
  const auto c_time = t.require("charttime");
  std::array<std::size_t, kRawColumnCount> cols{};
  for (std::size_t c = 0; c < kRawColumnCount; ++c) cols[c] = t.require(column_name(static_cast<Column>(c)));

  std::vector<RawRecord> out;
  out.reserve(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto& row = t.row(r);
    try {
      RawRecord rec;
      rec.subject_id = row[c_subject];
      rec.hadm_id = row[c_hadm];
      if (rec.subject_id.empty() || rec.hadm_id.empty()) {
        throw Error(ErrorKind::Schema, "empty subject_id or hadm_id");
      }
      rec.charttime = parse_charttime(row[c_time]);
      for (std::size_t c = 0; c < kRawColumnCount; ++c) {
        const auto col = static_cast<Column>(c);
        const auto& field = row[cols[c]];
        if (col == Column::Gender) {
          rec.values[c] = parse_gender(field);
        } else if (col == Column::Copd) {
          rec.values[c] = parse_flag(field);
        } else if (col == Column::Race) {
          rec.values[c] = field.empty() ? std::nan("") : static_cast<double>(parse_race(field));
        } else {
          rec.values[c] = csv::parse_optional_double(field).value_or(std::nan(""));
        }
      }
      out.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(ErrorKind::Schema, "line " + std::to_string(t.line_of(r)) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawRecord> read_raw_csv(const std::string& path) { return parse_raw_csv(csv::Table::read_file(path)); }

std::vector<std::vector<RawRecord>> group_by_admission(const std::vector<RawRecord>& records) {
  std::vector<std::vector<RawRecord>> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.emplace(r.hadm_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(r);
  }
  return groups;
}

AdmissionSeries merge_same_charttime(std::span<const RawRecord> records) {
  AdmissionSeries s;
  if (records.empty()) return s;
  s.subject_id = records.front().subject_id;
  s.hadm_id = records.front().hadm_id;
  for (const auto& r : records) {
    if (r.hadm_id != s.hadm_id) {
      throw Error(ErrorKind::InvalidInput, "merge_same_charttime: mixed admissions " + s.hadm_id + " and " + r.hadm_id);
    }
    if (r.subject_id != s.subject_id) {
      throw Error(ErrorKind::InvalidInput, "admission " + s.hadm_id + " spans several subjects");
    }
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].charttime < records[b].charttime; });
  for (auto i : order) {
    const auto& r = records[i];
    if (s.minutes.empty() || s.minutes.back() != r.charttime) {
      s.minutes.push_back(r.charttime);
      s.rows.push_back(missing_row());
    }
    auto& row = s.rows.back();
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (!std::isnan(r.values[c])) row[c] = r.values[c];
    }
  }
  for (auto col : kRawDemographics) {
    double latest = std::nan("");
    for (const auto& row : s.rows) {
      if (!std::isnan(row[idx(col)])) latest = row[idx(col)];
    }
    for (auto& row : s.rows) row[idx(col)] = latest;
  }
  s.masks.assign(s.rows.size(), MaskRow{});
  return s;
}

std::size_t sanitize(AdmissionSeries& series, const SanitizeRanges& ranges) {
  std::size_t cleared = 0;
  for (auto& row : series.rows) {
    for (auto k : kAllVitals) {
      double& v = row[idx(column_of(k))];
      if (!std::isnan(v) && !ranges[k].contains(v)) {
        v = std::nan("");
        ++cleared;
      }
    }
  }
  return cleared;
}

std::size_t sanitize(MaskedFrame& frame, const SanitizeRanges& ranges) {
  return sanitize(static_cast<AdmissionSeries&>(frame), ranges);
}

std::span<const Column> feature_columns() { return kFeatureColumns; }

std::vector<AdmissionSeries> filter_admissions(std::vector<AdmissionSeries> series, PipelineReport& report,
                                               const FilterConfig& config) {
  const double nfeat = static_cast<double>(kFeatureColumns.size());

  StageCount sparse{"drop_sparse_rows", total_rows(series), 0, series.size(), 0, 0};
  for (auto& s : series) {
    AdmissionSeries kept;
    kept.subject_id = s.subject_id;
    kept.hadm_id = s.hadm_id;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<double>(missing_in(s.rows[i])) / nfeat >= config.row_missing_drop_fraction) continue;
      kept.minutes.push_back(s.minutes[i]);
      kept.rows.push_back(s.rows[i]);
      kept.masks.push_back(s.masks.empty() ? MaskRow{} : s.masks[i]);
    }
    s = std::move(kept);
  }
  sparse.rows_after = total_rows(series);
  sparse.admissions_after = series.size();
  report.stages.push_back(sparse);

  auto long_enough = [&](const AdmissionSeries& s) { return s.size() >= config.min_rows; };
  series = keep_admissions(std::move(series), report, "min_chart_times", long_enough);

  series = keep_admissions(std::move(series), report, "admission_density", [&](const AdmissionSeries& s) {
    std::size_t missing = 0;
    for (const auto& r : s.rows) missing += missing_in(r);
    const double cells = static_cast<double>(s.size()) * nfeat;
    return cells > 0 && 1.0 - static_cast<double>(missing) / cells >= config.admission_min_present;
  });

  series = keep_admissions(std::move(series), report, "max_gap", [&](const AdmissionSeries& s) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s.minutes[i] - s.minutes[i - 1] > config.max_gap_minutes) return false;
    }
    return true;
  });

  return keep_admissions(std::move(series), report, "min_rows", long_enough);
}

MaskedFrame interpolate_minutes(const AdmissionSeries& s) {
  if (s.size() < 2) {
    throw Error(ErrorKind::InsufficientData, "admission " + s.hadm_id + " needs at least 2 charttimes");
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0 && s.minutes[i] <= s.minutes[i - 1]) {
      throw Error(ErrorKind::InvalidInput, "admission " + s.hadm_id + ": charttimes not strictly increasing");
    }
    for (double v : s.rows[i]) {
      if (std::isnan(v)) {
        throw Error(ErrorKind::MissingInput, "admission " + s.hadm_id + " has missing cells; impute first");
      }
    }
  }
  MaskedFrame f;
  f.subject_id = s.subject_id;
  f.hadm_id = s.hadm_id;
  const Minute first = s.minutes.front();
  const auto n = static_cast<std::size_t>(s.minutes.back() - first + 1);
  f.minutes.resize(n);
  f.rows.resize(n);
  f.masks.resize(n);
  f.charttime_mask.resize(n);
  MaskRow synthetic;
  synthetic.fill(1);

  std::size_t k = 0;  // knot at or before the current minute
  for (std::size_t i = 0; i < n; ++i) {
    const Minute t = first + static_cast<Minute>(i);
    while (k + 1 < s.size() && s.minutes[k + 1] <= t) ++k;
    f.minutes[i] = t;
    if (s.minutes[k] == t) {
      f.rows[i] = s.rows[k];
      f.masks[i] = s.masks.empty() ? MaskRow{} : s.masks[k];
      f.charttime_mask[i] = 0;
      continue;
    }
    const auto& a = s.rows[k];
    const auto& b = s.rows[k + 1];
    const double frac = static_cast<double>(t - s.minutes[k]) / static_cast<double>(s.minutes[k + 1] - s.minutes[k]);
    for (std::size_t c = 0; c < kColumnCount; ++c) {
      if (is_demographic(static_cast<Column>(c))) {
        f.rows[i][c] = a[c];
      } else {
        const double v = a[c] + (b[c] - a[c]) * frac;
        f.rows[i][c] = std::clamp(v, std::min(a[c], b[c]), std::max(a[c], b[c]));
      }
    }
    f.masks[i] = synthetic;
    f.charttime_mask[i] = 1;
  }
  return f;
}

double round_to(double value, int decimals) {
  if (std::isnan(value)) return value;
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

void round_values(MaskedFrame& frame) {
  static constexpr std::array<Column, 5> kWhole = {Column::RespRate, Column::HeartRate, Column::Sbp, Column::Dbp,
                                                   Column::SpO2};
  static constexpr std::array<Column, 5> kOneDecimal = {Column::Temperature, Column::Map, Column::Bmi,
                                                        Column::Weight, Column::Height};
  for (auto& row : frame.rows) {
    for (auto c : kWhole) row[idx(c)] = round_to(row[idx(c)], 0);
    for (auto c : kOneDecimal) row[idx(c)] = round_to(row[idx(c)], 1);
  }
}

double derive_map(double sbp, double dbp) {
  if (std::isnan(sbp) || std::isnan(dbp)) return std::nan("");
  return (sbp + 2.0 * dbp) / 3.0;
}

double derive_bmi(double weight_kg, double height_cm) {
  if (std::isnan(weight_kg) || std::isnan(height_cm)) return std::nan("");
  if (height_cm <= 0.0) throw Error(ErrorKind::InvalidInput, "height must be positive for BMI");
  const double m = height_cm / 100.0;
  return weight_kg / (m * m);
}

void add_derived_columns(AdmissionSeries& s) {
  if (s.masks.size() != s.rows.size()) s.masks.assign(s.rows.size(), MaskRow{});
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& r = s.rows[i];
    auto& m = s.masks[i];
    r[idx(Column::Map)] = derive_map(r[idx(Column::Sbp)], r[idx(Column::Dbp)]);
    m[idx(Column::Map)] = m[idx(Column::Sbp)] | m[idx(Column::Dbp)];
    r[idx(Column::Bmi)] = derive_bmi(r[idx(Column::Weight)], r[idx(Column::Height)]);
    m[idx(Column::Bmi)] = m[idx(Column::Weight)] | m[idx(Column::Height)];
  }
}

std::map<int, DurationStats> label_duration_stats(std::span<const int> labels) {
  std::map<int, std::vector<std::size_t>> runs;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    runs[labels[i]].push_back(j - i);
    i = j;
  }
  std::map<int, DurationStats> out;
  for (auto& [label, lengths] : runs) {
    DurationStats d;
    d.runs = lengths.size();
    double sum = 0;
    for (auto l : lengths) sum += static_cast<double>(l);
    d.mean = sum / static_cast<double>(lengths.size());
    std::sort(lengths.begin(), lengths.end());
    const auto mid = lengths.size() / 2;
    d.median = lengths.size() % 2 ? static_cast<double>(lengths[mid])
                                  : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
    out[label] = d;
  }
  return out;
}

LabelDistribution label_distribution(std::span<const int> labels) {
  LabelDistribution d;
  for (int l : labels) {
    if (l < 0 || l >= kNumClasses) throw Error(ErrorKind::InvalidInput, "label outside 0..3");
    ++d.counts[static_cast<std::size_t>(l)];
  }
  return d;
}

std::size_t LabelDistribution::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

double LabelDistribution::percent(int label) const {
  const auto n = total();
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(counts[static_cast<std::size_t>(label)]) / static_cast<double>(n);
}

nlohmann::json LabelDistribution::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (int l = 0; l < kNumClasses; ++l) {
    j.push_back({{"label", l}, {"count", counts[static_cast<std::size_t>(l)]}, {"percent", percent(l)}});
  }
  return j;
}

void PipelineReport::merge(const PipelineReport& other) {
  if (stages.empty()) {
    stages = other.stages;
  } else if (!other.stages.empty()) {
    if (stages.size() != other.stages.size()) {
      throw Error(ErrorKind::InvalidInput, "cannot merge reports with different stage lists");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
      stages[i].rows_before += other.stages[i].rows_before;
      stages[i].rows_after += other.stages[i].rows_after;
      stages[i].admissions_before += other.stages[i].admissions_before;
      stages[i].admissions_after += other.stages[i].admissions_after;
      stages[i].cells_cleared += other.stages[i].cells_cleared;
    }
  }
  missing_cells += other.missing_cells;
  feature_cells += other.feature_cells;
  auto add = [](std::optional<LabelDistribution>& a, const std::optional<LabelDistribution>& b) {
    if (!b) return;
    if (!a) a = LabelDistribution{};
    for (std::size_t i = 0; i < a->counts.size(); ++i) a->counts[i] += b->counts[i];
  };
  add(labels_before_interpolation, other.labels_before_interpolation);
  add(labels_after_interpolation, other.labels_after_interpolation);
}

nlohmann::json PipelineReport::to_json() const {
  using nlohmann::json;
  json st = json::array();
  for (const auto& s : stages) {
    st.push_back({{"stage", s.stage},
                  {"rows_before", s.rows_before},
                  {"rows_after", s.rows_after},
                  {"admissions_before", s.admissions_before},
                  {"admissions_after", s.admissions_after},
                  {"cells_cleared", s.cells_cleared}});
  }
  json j = {{"stages", st},
            {"missing_cells", missing_cells},
            {"feature_cells", feature_cells},
            {"missing_fraction", feature_cells ? static_cast<double>(missing_cells) / static_cast<double>(feature_cells) : 0.0}};
  if (labels_before_interpolation) j["labels_before_interpolation"] = labels_before_interpolation->to_json();
  if (labels_after_interpolation) j["labels_after_interpolation"] = labels_after_interpolation->to_json();
  if (!label_durations.empty()) {
    json d = json::array();
    for (const auto& [label, s] : label_durations) {
      d.push_back({{"label", label}, {"runs", s.runs}, {"mean_minutes", s.mean}, {"median_minutes", s.median}});
    }
    j["label_durations"] = d;
  }
  return j;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hypox::pipeline
