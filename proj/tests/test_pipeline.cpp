#include <doctest.h>

#include <cmath>
#include <random>

#include "hypox/pipeline.hpp"
#include "hypox/scoring.hpp"

using namespace hypox;
using namespace hypox::pipeline;

namespace {

RawRecord record(const std::string& hadm, Minute t) {
  RawRecord r;
  r.subject_id = "s1";
  r.hadm_id = hadm;
  r.charttime = t;
  return r;
}

// Fully observed admission with `n` rows spaced `step` minutes apart.
AdmissionSeries dense(const std::string& hadm, std::size_t n, Minute step) {
  AdmissionSeries s;
  s.subject_id = "s-" + hadm;
  s.hadm_id = hadm;
  for (std::size_t i = 0; i < n; ++i) {
    s.minutes.push_back(static_cast<Minute>(i) * step);
    Row r = missing_row();
    r[idx(Column::RespRate)] = 16;
    r[idx(Column::SpO2)] = 95;
    r[idx(Column::HeartRate)] = 80 + static_cast<double>(i % 7);
    r[idx(Column::Sbp)] = 120;
    r[idx(Column::Dbp)] = 70;
    r[idx(Column::Temperature)] = 37.0;
    r[idx(Column::Age)] = 60;
    r[idx(Column::Gender)] = 1;
    r[idx(Column::Height)] = 175;
    r[idx(Column::Weight)] = 80;
    r[idx(Column::Race)] = 0;
    r[idx(Column::Copd)] = 0;
    s.rows.push_back(r);
    s.masks.push_back(MaskRow{});
  }
  return s;
}

bool same_series(const std::vector<AdmissionSeries>& a, const std::vector<AdmissionSeries>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].hadm_id != b[i].hadm_id || a[i].minutes != b[i].minutes) return false;
    for (std::size_t r = 0; r < a[i].size(); ++r) {
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        const double x = a[i].rows[r][c], y = b[i].rows[r][c];
        if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("charttime parsing") {
  CHECK(parse_charttime("1970-01-01 00:00") == 0);
  CHECK(parse_charttime("1970-01-02T01:05") == 1440 + 65);
  CHECK(parse_charttime("2150-03-01 10:00:00") == parse_charttime("2150-03-01 10:00"));
  CHECK(format_charttime(parse_charttime("2150-02-28 23:59") + 1) == "2150-03-01 00:00");
  CHECK(format_charttime(parse_charttime("2152-02-28 23:59") + 1) == "2152-02-29 00:00");
  CHECK_THROWS_AS(parse_charttime("2150-03-01 10:00:30"), Error);
  CHECK_THROWS_AS(parse_charttime("2150-02-30 10:00"), Error);
  CHECK_THROWS_AS(parse_charttime("yesterday"), Error);
}

TEST_CASE("raw csv parsing") {
  const auto t = csv::Table::parse(
      "subject_id,hadm_id,charttime,heart_rate,resp_rate,spo2,sbp,dbp,temperature,age,gender,height,weight,race,copd\n"
      "1,10,2150-01-01 00:00,80,,95,120,70,37.1,65,M,170,70,WHITE,0\n"
      "1,10,2150-01-01 00:05,,18,,,,,,F,,,Something else,yes\n");
  const auto recs = parse_raw_csv(t);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].values[idx(Column::HeartRate)] == 80);
  CHECK(std::isnan(recs[0].values[idx(Column::RespRate)]));
  CHECK(recs[0].values[idx(Column::Gender)] == 1);
  CHECK(recs[0].values[idx(Column::Race)] == 0);
  CHECK(recs[1].values[idx(Column::Race)] == kRaceUndefined);
  CHECK(recs[1].values[idx(Column::Copd)] == 1);
  CHECK(recs[1].charttime - recs[0].charttime == 5);

  const auto bad = csv::Table::parse(
      "subject_id,hadm_id,charttime,heart_rate,resp_rate,spo2,sbp,dbp,temperature,age,gender,height,weight,race,copd\n"
      "1,10,2150-01-01 00:00,80,,95,120,70,37.1,65,X,170,70,WHITE,0\n");
  try {
    parse_raw_csv(bad);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Schema);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("merge_same_charttime") {
  SUBCASE("disjoint values are unioned") {
    auto a = record("h", 0), b = record("h", 0);
    a.values[idx(Column::HeartRate)] = 80;
    b.values[idx(Column::SpO2)] = 95;
    const std::vector recs{a, b};
    auto s = merge_same_charttime(recs);
    REQUIRE(s.size() == 1);
    CHECK(s.rows[0][idx(Column::HeartRate)] == 80);
    CHECK(s.rows[0][idx(Column::SpO2)] == 95);
  }
  SUBCASE("most recent occurrence wins") {
    auto a = record("h", 0), b = record("h", 0);
    a.values[idx(Column::HeartRate)] = 80;
    b.values[idx(Column::HeartRate)] = 82;
    const std::vector recs{a, b};
    CHECK(merge_same_charttime(recs).rows[0][idx(Column::HeartRate)] == 82);
  }
  SUBCASE("single row unchanged, rows sorted, demographics broadcast") {
    auto a = record("h", 10), b = record("h", 0);
    a.values[idx(Column::HeartRate)] = 70;
    b.values[idx(Column::Weight)] = 81;
    const std::vector one{a};
    auto s1 = merge_same_charttime(one);
    CHECK(s1.size() == 1);
    CHECK(s1.rows[0][idx(Column::HeartRate)] == 70);
    const std::vector two{a, b};
    auto s2 = merge_same_charttime(two);
    CHECK(s2.minutes == std::vector<Minute>{0, 10});
    CHECK(s2.rows[1][idx(Column::Weight)] == 81);
  }
  SUBCASE("mixed admissions rejected") {
    const std::vector recs{record("h1", 0), record("h2", 0)};
    CHECK_THROWS_AS(merge_same_charttime(recs), Error);
  }
}

TEST_CASE("sanitize") {
  auto s = dense("h", 3, 1);
  s.rows[0][idx(Column::SpO2)] = 105;
  s.rows[1][idx(Column::Temperature)] = 61;
  s.rows[2][idx(Column::HeartRate)] = 120;
  s.rows[2][idx(Column::Sbp)] = -1;
  CHECK(sanitize(s) == 3);
  CHECK(std::isnan(s.rows[0][idx(Column::SpO2)]));
  CHECK(std::isnan(s.rows[1][idx(Column::Temperature)]));
  CHECK(s.rows[2][idx(Column::HeartRate)] == 120);
  const auto once = s;
  CHECK(sanitize(s) == 0);
  CHECK(same_series({once}, {s}));
}

TEST_CASE("filter_admissions") {
  std::vector<AdmissionSeries> in;
  in.push_back(dense("dense", 100, 5));
  auto gap = dense("gap", 40, 5);
  for (std::size_t i = 20; i < gap.size(); ++i) gap.minutes[i] += 56;  // one 61-minute gap
  in.push_back(gap);
  in.push_back(dense("short", 29, 5));
  auto edge_gap = dense("edge_gap", 40, 5);
  for (std::size_t i = 20; i < edge_gap.size(); ++i) edge_gap.minutes[i] += 55;  // exactly 60
  in.push_back(edge_gap);
  auto sparse = dense("sparse", 40, 1);
  for (std::size_t c = 0; c < 6; ++c) sparse.rows[0][c] = std::nan("");
  for (std::size_t r = 1; r < 3; ++r) {
    for (auto c : feature_columns()) sparse.rows[r][idx(c)] = std::nan("");
  }
  in.push_back(sparse);

  PipelineReport report;
  auto out = filter_admissions(in, report);
  std::vector<std::string> kept;
  for (const auto& s : out) kept.push_back(s.hadm_id);
  CHECK(kept == std::vector<std::string>{"dense", "edge_gap", "sparse"});
  REQUIRE(report.stages.size() == 5);
  CHECK(report.stages[0].rows_before - report.stages[0].rows_after == 2);  // the two empty rows
  CHECK(out[2].size() == 38);
  CHECK(out[2].rows[0][idx(Column::Age)] == 60);  // row with 6 of 11 missing survives

  PipelineReport again;
  CHECK(same_series(filter_admissions(out, again), out));
}

TEST_CASE("admission density threshold") {
  auto s = dense("h", 40, 1);
  // 40 rows x 11 feature cells = 440; clear 60 cells -> 86.36% present
  std::size_t cleared = 0;
  for (std::size_t r = 0; r < 40 && cleared < 60; ++r) {
    for (std::size_t c = 0; c < 2 && cleared < 60; ++c, ++cleared) s.rows[r][c] = std::nan("");
  }
  PipelineReport rep;
  CHECK(filter_admissions({s}, rep).empty());
  s.rows[0][0] = 16;  // 59 missing -> 86.59%
  CHECK(filter_admissions({s}, rep).size() == 1);
}

TEST_CASE("interpolate_minutes") {
  AdmissionSeries s = dense("h", 2, 2);
  s.rows[0][idx(Column::SpO2)] = 90;
  s.rows[1][idx(Column::SpO2)] = 94;
  add_derived_columns(s);
  auto f = interpolate_minutes(s);
  REQUIRE(f.size() == 3);
  CHECK(f.rows[1][idx(Column::SpO2)] == 92);
  CHECK(f.masks[1][idx(Column::SpO2)] == 1);
  CHECK(f.charttime_mask == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(f.rows[0] == s.rows[0]);
  CHECK(f.masks[0] == MaskRow{});
  CHECK(f.rows[1][idx(Column::Age)] == 60);

  SUBCASE("fewer than two charttimes") {
    CHECK_THROWS_AS(interpolate_minutes(dense("h", 1, 1)), Error);
  }
  SUBCASE("missing cells rejected") {
    auto m = dense("h", 3, 1);
    CHECK_THROWS_AS(interpolate_minutes(m), Error);  // MAP and BMI not derived
  }
}

TEST_CASE("interpolation stays within the hull of bracketing knots") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(0.0, 100.0);
  std::uniform_int_distribution<int> step(1, 60);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = dense("h", 20, 1);
    Minute t = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.minutes[i] = t;
      t += step(rng);
      for (std::size_t c = 0; c < 6; ++c) s.rows[i][c] = val(rng);
    }
    add_derived_columns(s);
    auto f = interpolate_minutes(s);
    REQUIRE(f.size() == static_cast<std::size_t>(s.minutes.back() - s.minutes.front() + 1));
    std::size_t k = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(f.minutes[i] == s.minutes.front() + static_cast<Minute>(i));
      while (k + 1 < s.size() && s.minutes[k + 1] <= f.minutes[i]) ++k;
      if (s.minutes[k] == f.minutes[i]) {
        CHECK(f.rows[i] == s.rows[k]);
        CHECK(f.charttime_mask[i] == 0);
        continue;
      }
      CHECK(f.charttime_mask[i] == 1);
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        const double lo = std::min(s.rows[k][c], s.rows[k + 1][c]);
        const double hi = std::max(s.rows[k][c], s.rows[k + 1][c]);
        CHECK(f.rows[i][c] >= lo);
        CHECK(f.rows[i][c] <= hi);
        CHECK(f.masks[i][c] == 1);
      }
    }
  }
}

TEST_CASE("rounding is half away from zero") {
  struct Case {
    double in;
    int digits;
    double out;
  };
  // .5 cases whose binary representation is exact.
  const Case cases[] = {{92.5, 0, 93},   {93.5, 0, 94},   {0.5, 0, 1},     {-0.5, 0, -1},  {-2.5, 0, -3},
                        {81.0, 0, 81},   {37.04, 1, 37.0}, {37.25, 1, 37.3}, {37.75, 1, 37.8}, {-1.25, 1, -1.3}};
  for (const auto& c : cases) CHECK(round_to(c.in, c.digits) == doctest::Approx(c.out).epsilon(1e-12));
  CHECK(std::isnan(round_to(std::nan(""), 0)));

  MaskedFrame f = as_frame(dense("h", 1, 1));
  f.rows[0][idx(Column::SpO2)] = 92.5;
  f.rows[0][idx(Column::Temperature)] = 37.04;
  f.rows[0][idx(Column::HeartRate)] = 81.0;
  round_values(f);
  CHECK(f.rows[0][idx(Column::SpO2)] == 93);
  CHECK(f.rows[0][idx(Column::Temperature)] == doctest::Approx(37.0));
  CHECK(f.rows[0][idx(Column::HeartRate)] == 81);
}

TEST_CASE("derived MAP and BMI") {
  CHECK(derive_map(120, 60) == doctest::Approx(80.0));
  CHECK(derive_map(90, 90) == doctest::Approx(90.0));
  CHECK(derive_map(150, 75) == doctest::Approx(100.0));
  CHECK(std::isnan(derive_map(std::nan(""), 60)));
  CHECK(derive_bmi(80, 200) == doctest::Approx(20.0));
  CHECK(round_to(derive_bmi(70, 175), 1) == doctest::Approx(22.9));
  CHECK_THROWS_AS(derive_bmi(60, 0), Error);

  auto s = dense("h", 1, 1);
  s.masks[0][idx(Column::Dbp)] = 1;
  add_derived_columns(s);
  CHECK(s.masks[0][idx(Column::Map)] == 1);
  CHECK(s.masks[0][idx(Column::Bmi)] == 0);
}

TEST_CASE("label duration statistics") {
  const std::vector<int> a{0, 0, 3, 3, 3, 0};
  auto s = label_duration_stats(a);
  CHECK(s[3].mean == 3);
  CHECK(s[3].median == 3);
  CHECK(s[0].runs == 2);
  const std::vector<int> zeros(10, 0);
  CHECK(label_duration_stats(zeros)[0].median == 10);
  const std::vector<int> b{1, 2, 1};
  auto sb = label_duration_stats(b);
  CHECK(sb[1].runs == 2);
  CHECK(sb[1].mean == 1);
  CHECK(sb[2].mean == 1);
}

TEST_CASE("label distribution is stable under interpolation") {
  // Slowly varying SpO2 on an irregular grid.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> step(5, 30);
  auto s = dense("h", 400, 1);
  Minute t = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.minutes[i] = t;
    t += step(rng);
    s.rows[i][idx(Column::SpO2)] = std::round(91.0 + 6.0 * std::sin(static_cast<double>(i) / 15.0));
  }
  add_derived_columns(s);
  auto f = interpolate_minutes(s);
  round_values(f);
  auto labels_of = [&](const AdmissionSeries& a) {
    std::vector<int> out;
    for (const auto& r : a.rows) {
      out.push_back(scoring::severity_label(r[idx(Column::SpO2)], scoring::PopulationGroup::AdultNoCopd));
    }
    return out;
  };
  const auto before = label_distribution(labels_of(s));
  const auto after = label_distribution(labels_of(f));
  for (int l = 0; l < kNumClasses; ++l) CHECK(std::abs(before.percent(l) - after.percent(l)) < 5.0);
}

TEST_CASE("report merge is commutative") {
  PipelineReport a, b;
  filter_admissions({dense("x", 40, 1)}, a);
  filter_admissions({dense("y", 10, 1), dense("z", 35, 1)}, b);
  a.missing_cells = 3;
  b.feature_cells = 10;
  auto ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  CHECK(ab.to_json() == ba.to_json());
  CHECK(ab.stages.back().admissions_after == 2);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw Error(ErrorKind::InvalidInput, "boom");
                               }),
                  Error);
}
