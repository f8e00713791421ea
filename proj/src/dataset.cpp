#include "hypox/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <set>

#include "hypox/csv.hpp"
#include "hypox/pipeline.hpp"

namespace hypox::dataset {

namespace {

constexpr std::array<Column, kContinuousFeatures> kContinuous = {
    Column::RespRate, Column::SpO2,   Column::HeartRate, Column::Sbp, Column::Dbp, Column::Temperature,
    Column::Age,      Column::Weight, Column::Height,    Column::Bmi, Column::Map,
};

// Masked source columns besides the six TAG masks.
constexpr std::array<Column, 10> kMasked = {
    Column::RespRate, Column::SpO2,   Column::HeartRate, Column::Sbp, Column::Dbp,
    Column::Temperature, Column::Height, Column::Weight, Column::Bmi, Column::Map,
};

std::string slug(std::string_view label) {
  std::string out;
  bool sep = false;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (sep && !out.empty()) out.push_back('_');
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      sep = false;
    } else {
      sep = true;
    }
  }
  return out;
}

std::vector<std::string> build_names() {
  std::vector<std::string> n;
  for (auto c : kContinuous) n.emplace_back(column_name(c));
  for (int r = 0; r < kRaceUndefined; ++r) n.push_back("race_" + slug(kRaceCategories[static_cast<std::size_t>(r)]));
  n.emplace_back("gender");
  for (auto k : kAllVitals) n.push_back("TAG_" + std::string(vital_name(k)));
  for (auto c : kMasked) n.push_back("mask_" + std::string(column_name(c)));
  for (auto k : kAllVitals) n.push_back("mask_TAG_" + std::string(vital_name(k)));
  return n;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + path + "'");
  return out;
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = build_names();
  return names;
}

WindowBatch sliding_windows(std::span<const int> shifted_labels, std::size_t width, std::size_t stride) {
  if (width == 0 || stride == 0) throw Error(ErrorKind::InvalidInput, "window width and stride must be positive");
  WindowBatch b;
  b.width = width;
  b.stride = stride;
  for (std::size_t k = 0; k + width <= shifted_labels.size(); k += stride) {
    b.starts.push_back(k);
    b.targets.push_back(shifted_labels[k + width - 1]);
  }
  return b;
}

std::size_t PaddedSequence::real_rows() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::vector<PaddedSequence> pad_and_segment(const Matrix& frame, std::size_t target_len, double pad_value) {
  if (target_len == 0) throw Error(ErrorKind::InvalidInput, "sequence length must be positive");
  std::vector<PaddedSequence> out;
  for (std::size_t start = 0; start < frame.rows(); start += target_len) {
    PaddedSequence s{Matrix(target_len, frame.cols(), pad_value), std::vector<std::uint8_t>(target_len, 0)};
    const std::size_t n = std::min(target_len, frame.rows() - start);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(frame.row(start + r).begin(), frame.cols(), s.rows.row(r).begin());
      s.valid[r] = 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

Standardizer Standardizer::fit(const Matrix& train, std::span<const std::size_t> columns) {
  Standardizer s;
  s.columns.assign(columns.begin(), columns.end());
  for (auto c : columns) {
    if (c >= train.cols()) throw Error(ErrorKind::InvalidInput, "standardizer column out of range");
    double sum = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) sum += train(r, c);
    const double n = static_cast<double>(train.rows());
    const double mean = train.rows() ? sum / n : 0.0;
    double ss = 0;
    for (std::size_t r = 0; r < train.rows(); ++r) ss += (train(r, c) - mean) * (train(r, c) - mean);
    const double sd = train.rows() ? std::sqrt(ss / n) : 0.0;
    s.mean.push_back(mean);
    s.sd.push_back(sd > 0 ? sd : 1.0);
  }
  return s;
}

void Standardizer::apply(Matrix& x) const {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < columns.size(); ++i) x(r, columns[i]) = (x(r, columns[i]) - mean[i]) / sd[i];
  }
}

nlohmann::json Standardizer::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  const auto& names = feature_names();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto name = columns[i] < names.size() ? names[columns[i]] : std::to_string(columns[i]);
    j.push_back({{"feature", name}, {"mean", mean[i]}, {"sd", sd[i]}});
  }
  return j;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

void SplitFractions::validate() const {
  if (train < 0 || validation < 0 || test < 0 || std::abs(train + validation + test - 1.0) > 1e-9) {
    throw Error(ErrorKind::Config, "split fractions must be non-negative and sum to 1");
  }
}

Split SplitAssignment::of(const std::string& subject_id) const {
  auto it = by_subject.find(subject_id);
  if (it == by_subject.end()) throw Error(ErrorKind::InvalidInput, "subject '" + subject_id + "' has no split");
  return it->second;
}

std::array<std::size_t, 3> SplitAssignment::counts() const {
  std::array<std::size_t, 3> c{};
  for (const auto& [id, s] : by_subject) ++c[static_cast<std::size_t>(s)];
  return c;
}

nlohmann::json SplitAssignment::to_json() const {
  nlohmann::json subjects = nlohmann::json::object();
  for (const auto& [id, s] : by_subject) subjects[id] = split_name(s);
  const auto c = counts();
  return {{"seed", seed},
          {"fractions", {{"train", fractions.train}, {"validation", fractions.validation}, {"test", fractions.test}}},
          {"counts", {{"train", c[0]}, {"validation", c[1]}, {"test", c[2]}}},
          {"subjects", subjects}};
}

SplitAssignment split_patients(std::span<const std::string> subject_ids, const SplitFractions& fractions,
                               std::uint64_t seed) {
  fractions.validate();
  std::set<std::string> distinct(subject_ids.begin(), subject_ids.end());
  if (distinct.empty()) throw Error(ErrorKind::InvalidInput, "no patients to split");
  std::vector<std::string> ids(distinct.begin(), distinct.end());
  // Fisher-Yates with raw engine output keeps the shuffle identical across
  // standard library implementations.
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);

  // Largest-remainder apportionment: floors first, then leftover patients go
  // to the largest fractional parts (ties: train, validation, test).
  const double n = static_cast<double>(ids.size());
  const std::array<double, 3> quota = {n * fractions.train, n * fractions.validation, n * fractions.test};
  std::array<std::size_t, 3> count{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    count[k] = static_cast<std::size_t>(std::floor(quota[k] + 1e-9));
    assigned += count[k];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quota[a] - static_cast<double>(count[a]) > quota[b] - static_cast<double>(count[b]) + 1e-9;
  });
  for (std::size_t k = 0; assigned < ids.size(); ++k, ++assigned) ++count[order[k % 3]];
  const std::size_t n_val = count[1], n_test = count[2];
  SplitAssignment a;
  a.seed = seed;
  a.fractions = fractions;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Split s = Split::Train;
    if (i < n_val) {
      s = Split::Validation;
    } else if (i < n_val + n_test) {
      s = Split::Test;
    }
    a.by_subject[ids[i]] = s;
  }
  return a;
}

std::array<double, kNumClasses> class_weights(std::span<const int> labels) {
  std::array<std::size_t, kNumClasses> n{};
  for (int l : labels) {
    if (l < 0 || l >= kNumClasses) throw Error(ErrorKind::InvalidInput, "label outside 0..3");
    ++n[static_cast<std::size_t>(l)];
  }
  std::array<double, kNumClasses> w{};
  for (std::size_t c = 0; c < n.size(); ++c) {
    if (n[c] == 0) throw Error(ErrorKind::DegenerateClass, "class " + std::to_string(c) + " has no examples");
    w[c] = static_cast<double>(labels.size()) / (static_cast<double>(kNumClasses) * static_cast<double>(n[c]));
  }
  return w;
}

AdmissionFeatures assemble_features(const MaskedFrame& frame, const scoring::ScoringMatrix& matrix) {
  AdmissionFeatures a;
  a.subject_id = frame.subject_id;
  a.hadm_id = frame.hadm_id;
  a.minutes = frame.minutes;
  a.charttime_mask = frame.charttime_mask;
  if (a.charttime_mask.size() != frame.size()) a.charttime_mask.assign(frame.size(), 0);
  a.x = Matrix(frame.size(), kFeatureCount);
  a.labels.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& v = frame.rows[i];
    const MaskRow m = frame.masks.size() == frame.size() ? frame.masks[i] : MaskRow{};
    const double age = v[idx(Column::Age)];
    const double copd = v[idx(Column::Copd)];
    if (std::isnan(age) || std::isnan(copd)) {
      throw Error(ErrorKind::MissingInput, "admission " + frame.hadm_id + " lacks age or copd");
    }
    const auto group = scoring::classify_population(age, copd != 0.0);
    scoring::VitalRecord vitals;
    for (auto k : kAllVitals) {
      const double x = v[idx(column_of(k))];
      if (!std::isnan(x)) vitals[static_cast<std::size_t>(k)] = x;
    }
    const auto tags = scoring::tag_vector(vitals, scoring::age_band(age), matrix);
    a.labels[i] = matrix.severity_label(v[idx(Column::SpO2)], group);

    auto row = a.x.row(i);
    std::size_t f = 0;
    for (auto c : kContinuous) {
      if (std::isnan(v[idx(c)])) {
        throw Error(ErrorKind::MissingInput,
                    "admission " + frame.hadm_id + ": missing " + std::string(column_name(c)));
      }
      row[f++] = v[idx(c)];
    }
    const double race = v[idx(Column::Race)];
    for (int r = 0; r < kRaceUndefined; ++r) row[f++] = race == static_cast<double>(r) ? 1.0 : 0.0;
    row[f++] = v[idx(Column::Gender)];
    for (auto t : tags) row[f++] = static_cast<double>(t);
    for (auto c : kMasked) row[f++] = m[idx(c)];
    for (auto k : kAllVitals) row[f++] = m[idx(column_of(k))];
  }
  return a;
}

LabeledRows shifted_rows(std::span<const AdmissionFeatures> admissions, std::size_t lag) {
  LabeledRows out;
  for (const auto& a : admissions) {
    const auto y = shift_labels<int>(a.labels, lag);
    for (std::size_t t = 0; t < y.size(); ++t) {
      out.x.append_row(a.x.row(t));
      out.y.push_back(y[t]);
    }
  }
  if (out.x.cols() == 0) out.x = Matrix(0, kFeatureCount);
  return out;
}

void DatasetConfig::validate() const {
  if (lag == 0) throw Error(ErrorKind::Config, "dataset.lag must be positive");
  if (window == 0) throw Error(ErrorKind::Config, "dataset.window must be positive");
  if (sequence_length == 0) throw Error(ErrorKind::Config, "dataset.sequence_length must be positive");
  fractions.validate();
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"lag", lag},
          {"window", window},
          {"sequence_length", sequence_length},
          {"pad_value", pad_value},
          {"export_sequences", export_sequences},
          {"split", {{"train", fractions.train}, {"validation", fractions.validation}, {"test", fractions.test}}}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j, DatasetConfig base) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "dataset config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lag") {
        base.lag = value.get<std::size_t>();
      } else if (key == "window") {
        base.window = value.get<std::size_t>();
      } else if (key == "sequence_length") {
        base.sequence_length = value.get<std::size_t>();
      } else if (key == "pad_value") {
        base.pad_value = value.get<double>();
      } else if (key == "export_sequences") {
        base.export_sequences = value.get<bool>();
      } else if (key == "split") {
        if (!value.is_object()) throw Error(ErrorKind::Config, "dataset.split must be an object");
        for (const auto& [k, v] : value.items()) {
          if (k == "train") {
            base.fractions.train = v.get<double>();
          } else if (k == "validation") {
            base.fractions.validation = v.get<double>();
          } else if (k == "test") {
            base.fractions.test = v.get<double>();
          } else {
            throw Error(ErrorKind::Config, "unknown dataset.split key '" + k + "'");
          }
        }
      } else {
        throw Error(ErrorKind::Config, "unknown dataset key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "dataset." + key + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

nlohmann::json BuiltDataset::manifest(const DatasetConfig& config) const {
  nlohmann::json parts = nlohmann::json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    std::array<std::size_t, kNumClasses> counts{};
    for (int l : rows[s].y) ++counts[static_cast<std::size_t>(l)];
    parts[std::string(split_name(static_cast<Split>(s)))] = {
        {"admissions", admissions[s].size()}, {"rows", rows[s].y.size()}, {"label_counts", counts}};
  }
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& [hadm, why] : excluded) ex.push_back({{"hadm_id", hadm}, {"reason", why}});
  return {{"config", config.to_json()},
          {"features", feature_names()},
          {"standardization", standardizer.to_json()},
          {"parts", parts},
          {"windows", windows},
          {"excluded", ex},
          {"split", split.to_json()}};
}

BuiltDataset build_dataset(const std::vector<MaskedFrame>& frames, const DatasetConfig& config, std::uint64_t seed,
                           int jobs, const scoring::ScoringMatrix& matrix) {
  config.validate();
  std::vector<std::optional<AdmissionFeatures>> built(frames.size());
  std::vector<std::string> reasons(frames.size());
  pipeline::parallel_for(frames.size(), jobs, [&](std::size_t i) {
    try {
      built[i] = assemble_features(frames[i], matrix);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UnsupportedPopulation) throw;
      reasons[i] = e.what();
    }
  });

  BuiltDataset d;
  std::vector<std::string> subjects;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (built[i]) {
      subjects.push_back(built[i]->subject_id);
    } else {
      d.excluded.emplace_back(frames[i].hadm_id, reasons[i]);
    }
  }
  if (subjects.empty()) throw Error(ErrorKind::InsufficientData, "no admissions left to build a dataset from");
  d.split = split_patients(subjects, config.fractions, seed);
  for (auto& b : built) {
    if (!b) continue;
    const auto s = static_cast<std::size_t>(d.split.of(b->subject_id));
    d.admissions[s].push_back(std::move(*b));
  }

  LabeledRows train_rows = shifted_rows(d.admissions[0], config.lag);
  std::vector<std::size_t> cols(kContinuousFeatures);
  for (std::size_t c = 0; c < cols.size(); ++c) cols[c] = c;
  d.standardizer = Standardizer::fit(train_rows.x, cols);
  for (std::size_t s = 0; s < 3; ++s) {
    for (auto& a : d.admissions[s]) {
      d.standardizer.apply(a.x);
      const auto y = shift_labels<int>(a.labels, config.lag);
      d.windows += sliding_windows(y, config.window).size();
    }
    d.rows[s] = shifted_rows(d.admissions[s], config.lag);
  }
  return d;
}

void write_gbm_csv(const std::string& path, const LabeledRows& rows, const std::string& provenance) {
  auto out = open_out(path);
  if (!provenance.empty()) out << "# " << provenance << '\n';
  auto header = feature_names();
  header.emplace_back("label");
  csv::write_row(out, header);
  std::vector<std::string> fields;
  for (std::size_t r = 0; r < rows.x.rows(); ++r) {
    fields.clear();
    for (double v : rows.x.row(r)) fields.push_back(csv::format_double(v));
    fields.push_back(std::to_string(rows.y[r]));
    csv::write_row(out, fields);
  }
}

LabeledRows read_gbm_csv(const std::string& path) {
  const auto t = csv::Table::read_file(path);
  const auto& names = feature_names();
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(t.require(n));
  const auto c_label = t.require("label");
  LabeledRows out{Matrix(t.rows(), names.size()), std::vector<int>(t.rows())};
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto& row = t.row(r);
    try {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto v = csv::parse_optional_double(row[cols[c]]);
        if (!v) throw Error(ErrorKind::Schema, "missing value for " + names[c]);
        out.x(r, c) = *v;
      }
      const auto l = csv::parse_optional_double(row[c_label]);
      if (!l || *l != std::floor(*l) || *l < 0 || *l >= kNumClasses) {
        throw Error(ErrorKind::Schema, "label must be an integer in 0..3");
      }
      out.y[r] = static_cast<int>(*l);
    } catch (const Error& e) {
      throw Error(ErrorKind::Schema, path + ":" + std::to_string(t.line_of(r)) + ": " + e.what());
    }
  }
  return out;
}

void write_sequence_csv(const std::string& path, std::span<const AdmissionFeatures> admissions,
                        const DatasetConfig& config, const std::string& provenance) {
  auto out = open_out(path);
  if (!provenance.empty()) out << "# " << provenance << '\n';
  std::vector<std::string> header = {"segment", "valid", "subject_id", "hadm_id", "charttime", "mask_charttime"};
  for (const auto& n : feature_names()) header.push_back(n);
  header.emplace_back("label");
  csv::write_row(out, header);

  const auto pad = csv::format_double(config.pad_value);
  std::size_t segment = 0;
  std::vector<std::string> fields;
  for (const auto& a : admissions) {
    const auto y = shift_labels<int>(a.labels, config.lag);
    // Columns: minute, charttime mask, features, label.
    Matrix block(y.size(), kFeatureCount + 3);
    for (std::size_t t = 0; t < y.size(); ++t) {
      auto row = block.row(t);
      row[0] = static_cast<double>(a.minutes[t]);
      row[1] = a.charttime_mask[t];
      std::copy_n(a.x.row(t).begin(), kFeatureCount, row.begin() + 2);
      row[kFeatureCount + 2] = y[t];
    }
    for (const auto& seq : pad_and_segment(block, config.sequence_length, config.pad_value)) {
      for (std::size_t r = 0; r < seq.rows.rows(); ++r) {
        fields.clear();
        fields.push_back(std::to_string(segment));
        fields.push_back(seq.valid[r] ? "1" : "0");
        fields.push_back(a.subject_id);
        fields.push_back(a.hadm_id);
        const auto row = seq.rows.row(r);
        fields.push_back(seq.valid[r] ? format_charttime(static_cast<Minute>(row[0])) : std::string());
        for (std::size_t c = 1; c < row.size(); ++c) fields.push_back(seq.valid[r] ? csv::format_double(row[c]) : pad);
        csv::write_row(out, fields);
      }
      ++segment;
    }
  }
}

}  // namespace hypox::dataset
