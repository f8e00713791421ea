#include "hypox/frame.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>

#include "hypox/csv.hpp"

namespace hypox {

namespace {

constexpr std::array<std::string_view, kColumnCount> kColumnNames = {
    "resp_rate", "spo2",   "heart_rate", "sbp",  "dbp", "temperature", "age",
    "gender",    "height", "weight",     "race", "copd", "map",        "bmi",
};

std::string normalize_label(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29 : kDays[m - 1];
}

int parse_digits(std::string_view s, std::size_t pos, std::size_t n, std::string_view text) {
  if (pos + n > s.size()) throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
    }
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace

std::string_view column_name(Column c) { return kColumnNames[idx(c)]; }

std::optional<Column> parse_column(std::string_view name) {
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (kColumnNames[i] == name) return static_cast<Column>(i);
  }
  return std::nullopt;
}

bool is_demographic(Column c) {
  switch (c) {
    case Column::Age:
    case Column::Gender:
    case Column::Height:
    case Column::Weight:
    case Column::Race:
    case Column::Copd:
    case Column::Bmi:
      return true;
    default:
      return false;
  }
}

bool is_categorical(Column c) { return c == Column::Gender || c == Column::Race || c == Column::Copd; }

int parse_race(std::string_view label) {
  const auto key = normalize_label(label);
  for (std::size_t i = 0; i < kRaceCategories.size(); ++i) {
    if (normalize_label(kRaceCategories[i]) == key) return static_cast<int>(i);
  }
  return kRaceUndefined;
}

Minute parse_charttime(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':') {
    throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
  }
  const int y = parse_digits(s, 0, 4, text);
  const int mo = parse_digits(s, 5, 2, text);
  const int d = parse_digits(s, 8, 2, text);
  const int h = parse_digits(s, 11, 2, text);
  const int mi = parse_digits(s, 14, 2, text);
  if (s.size() > 16) {
    if (s[16] != ':') throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
    const int sec = parse_digits(s, 17, 2, text);
    std::string_view rest = s.substr(19);
    bool zero_fraction = true;
    if (!rest.empty()) {
      if (rest.front() != '.') throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
      for (char c : rest.substr(1)) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
          throw Error(ErrorKind::Schema, "malformed charttime '" + std::string(text) + "'");
        }
        zero_fraction = zero_fraction && c == '0';
      }
    }
    if (sec != 0 || !zero_fraction) {
      throw Error(ErrorKind::Schema, "charttime '" + std::string(text) + "' has a sub-minute component");
    }
  }
  if (mo < 1 || mo > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, static_cast<unsigned>(mo)) || h > 23 ||
      mi > 59) {
    throw Error(ErrorKind::Schema, "invalid charttime '" + std::string(text) + "'");
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 1440 + h * 60 + mi;
}

std::string format_charttime(Minute m) {
  std::int64_t days = m >= 0 ? m / 1440 : -((-m + 1439) / 1440);
  const std::int64_t rem = m - days * 1440;
  std::int64_t y = 0;
  unsigned mo = 0, d = 0;
  civil_from_days(days, y, mo, d);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02d:%02d", static_cast<long long>(y), mo, d,
                static_cast<int>(rem / 60), static_cast<int>(rem % 60));
  return buf;
}

std::vector<std::string> frame_csv_header() {
  std::vector<std::string> h = {"subject_id", "hadm_id", "charttime"};
  for (auto n : kColumnNames) h.emplace_back(n);
  for (auto n : kColumnNames) h.push_back("mask_" + std::string(n));
  h.emplace_back("mask_charttime");
  return h;
}

void write_frames_csv(const std::string& path, const std::vector<MaskedFrame>& frames,
                      const std::string& provenance_comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + path + "'");
  if (!provenance_comment.empty()) out << "# " << provenance_comment << '\n';
  csv::write_row(out, frame_csv_header());
  std::vector<std::string> fields;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      fields.clear();
      fields.push_back(f.subject_id);
      fields.push_back(f.hadm_id);
      fields.push_back(format_charttime(f.minutes[i]));
      for (double v : f.rows[i]) fields.push_back(csv::format_double(v));
      for (auto m : f.masks[i]) fields.push_back(m ? "1" : "0");
      fields.push_back(f.charttime_mask[i] ? "1" : "0");
      csv::write_row(out, fields);
    }
  }
}

std::vector<MaskedFrame> read_frames_csv(const std::string& path) {
  const auto t = csv::Table::read_file(path);
  const auto header = frame_csv_header();
  std::vector<std::size_t> cols;
  for (const auto& h : header) cols.push_back(t.require(h));

  std::vector<MaskedFrame> frames;
  std::map<std::string, std::size_t> by_hadm;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto& row = t.row(r);
    try {
      const auto& hadm = row[cols[1]];
      auto [it, inserted] = by_hadm.emplace(hadm, frames.size());
      if (inserted) {
        frames.emplace_back();
        frames.back().subject_id = row[cols[0]];
        frames.back().hadm_id = hadm;
      }
      auto& f = frames[it->second];
      if (!inserted && !f.minutes.empty() && f.subject_id != row[cols[0]]) {
        throw Error(ErrorKind::Schema, "admission " + hadm + " spans several subjects");
      }
      f.minutes.push_back(parse_charttime(row[cols[2]]));
      Row values;
      MaskRow masks;
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        values[c] = csv::parse_optional_double(row[cols[3 + c]]).value_or(std::nan(""));
        masks[c] = row[cols[3 + kColumnCount + c]] == "1" ? 1 : 0;
      }
      f.rows.push_back(values);
      f.masks.push_back(masks);
      f.charttime_mask.push_back(row[cols.back()] == "1" ? 1 : 0);
    } catch (const Error& e) {
      throw Error(e.kind(), path + ":" + std::to_string(t.line_of(r)) + ": " + e.what());
    }
  }
  for (const auto& f : frames) {
    for (std::size_t i = 1; i < f.minutes.size(); ++i) {
      if (f.minutes[i] <= f.minutes[i - 1]) {
        throw Error(ErrorKind::Schema, path + ": charttimes of admission " + f.hadm_id + " are not increasing");
      }
    }
  }
  return frames;
}

MaskedFrame as_frame(const AdmissionSeries& s) {
  MaskedFrame f;
  static_cast<AdmissionSeries&>(f) = s;
  if (f.masks.size() != f.rows.size()) f.masks.assign(f.rows.size(), MaskRow{});
  f.charttime_mask.assign(f.rows.size(), 0);
  return f;
}

}  // namespace hypox
