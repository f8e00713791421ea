#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "hypox/csv.hpp"
#include "hypox/dataset.hpp"

using namespace hypox;
using namespace hypox::dataset;

namespace {

MaskedFrame adult_frame(const std::string& subject, const std::string& hadm, std::size_t n, double age = 60,
                        double copd = 0) {
  MaskedFrame f;
  f.subject_id = subject;
  f.hadm_id = hadm;
  for (std::size_t i = 0; i < n; ++i) {
    f.minutes.push_back(static_cast<Minute>(i));
    Row r = missing_row();
    r[idx(Column::RespRate)] = 16;
    r[idx(Column::SpO2)] = 88 + static_cast<double>(i % 10);
    r[idx(Column::HeartRate)] = 80;
    r[idx(Column::Sbp)] = 120;
    r[idx(Column::Dbp)] = 60;
    r[idx(Column::Temperature)] = 37.0;
    r[idx(Column::Age)] = age;
    r[idx(Column::Gender)] = 1;
    r[idx(Column::Height)] = 200;
    r[idx(Column::Weight)] = 80;
    r[idx(Column::Race)] = 3;
    r[idx(Column::Copd)] = copd;
    r[idx(Column::Map)] = 80;
    r[idx(Column::Bmi)] = 20;
    f.rows.push_back(r);
    f.masks.push_back(MaskRow{});
    f.charttime_mask.push_back(0);
  }
  return f;
}

}  // namespace

TEST_CASE("shift_labels") {
  const std::vector<double> y{316.1, 317.3, 317.6, 317.5, 316.4, 316.9};
  CHECK(shift_labels<double>(y, 1) == std::vector<double>{317.3, 317.6, 317.5, 316.4, 316.9});
  const std::vector<int> flat(12, 2);
  CHECK(shift_labels<int>(flat, 5) == std::vector<int>(7, 2));
  const std::vector<int> five(5, 1);
  CHECK(shift_labels<int>(five, 5).empty());
  std::vector<int> seq(50);
  for (int i = 0; i < 50; ++i) seq[static_cast<std::size_t>(i)] = i % 4;
  const auto s = shift_labels<int>(seq, 5);
  REQUIRE(s.size() == 45);
  for (std::size_t t = 0; t < s.size(); ++t) CHECK(s[t] == seq[t + 5]);
}

TEST_CASE("sliding_windows") {
  std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
  auto b = sliding_windows(y);
  REQUIRE(b.size() == 6);
  for (std::size_t k = 0; k < b.size(); ++k) {
    CHECK(b.starts[k] == k);
    CHECK(b.targets[k] == y[k + 4]);
  }
  // Consecutive windows share exactly width - 1 rows.
  CHECK(b.starts[0] + b.width - b.starts[1] == 4);
  CHECK(sliding_windows(std::span<const int>(y.data(), 5)).size() == 1);
  CHECK(sliding_windows(std::span<const int>(y.data(), 4)).size() == 0);
}

TEST_CASE("pad_and_segment") {
  auto make = [](std::size_t n) {
    Matrix m(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      m(r, 0) = static_cast<double>(r);
      m(r, 1) = -static_cast<double>(r);
    }
    return m;
  };
  auto s2048 = pad_and_segment(make(2048));
  REQUIRE(s2048.size() == 2);
  CHECK(s2048[1].real_rows() == 1024);

  const auto m1030 = make(1030);
  auto s1030 = pad_and_segment(m1030);
  REQUIRE(s1030.size() == 2);
  CHECK(s1030[1].real_rows() == 6);
  CHECK(1024 - s1030[1].real_rows() == 1018);
  CHECK(s1030[1].rows(6, 0) == 1000.0);
  CHECK(s1030[1].valid[5] == 1);
  CHECK(s1030[1].valid[6] == 0);
  // Real rows concatenate back to the original.
  Matrix back;
  for (const auto& s : s1030) {
    for (std::size_t r = 0; r < s.rows.rows(); ++r) {
      if (s.valid[r]) back.append_row(s.rows.row(r));
    }
  }
  CHECK(back == m1030);

  auto s952 = pad_and_segment(make(952));
  REQUIRE(s952.size() == 1);
  CHECK(1024 - s952[0].real_rows() == 72);
  CHECK(pad_and_segment(Matrix(0, 3)).empty());
}

TEST_CASE("standardizer uses training statistics") {
  Matrix train(2, 2);
  train(0, 0) = 8;
  train(1, 0) = 12;
  train(0, 1) = 3;
  train(1, 1) = 3;
  const std::vector<std::size_t> cols{0, 1};
  auto st = Standardizer::fit(train, cols);
  CHECK(st.mean[0] == 10);
  CHECK(st.sd[0] == 2);
  CHECK(st.sd[1] == 1);  // zero variance
  Matrix valid(1, 2);
  valid(0, 0) = 14;
  valid(0, 1) = 5;
  st.apply(valid);
  CHECK(valid(0, 0) == 2.0);
  CHECK(valid(0, 1) == 2.0);
}

TEST_CASE("split_patients") {
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back("p" + std::to_string(i));
  auto a = split_patients(ids, {}, 1);
  CHECK(a.counts() == std::array<std::size_t, 3>{6, 1, 1});
  CHECK(split_patients(ids, {}, 1).by_subject == a.by_subject);

  std::vector<std::string> many;
  for (int i = 0; i < 2439; ++i) many.push_back(std::to_string(i));
  CHECK(split_patients(many, {}, 3).counts() == std::array<std::size_t, 3>{1829, 305, 305});

  // Duplicate ids collapse to one patient.
  ids.push_back("p0");
  CHECK(split_patients(ids, {}, 1).by_subject.size() == 8);

  CHECK_THROWS_AS(split_patients(ids, {0.7, 0.2, 0.2}, 1), Error);
  CHECK_THROWS_AS(split_patients(std::vector<std::string>{}, {}, 1), Error);
}

TEST_CASE("class_weights") {
  const std::vector<int> y{0, 0, 0, 0, 1, 1, 2, 3};
  auto w = class_weights(y);
  CHECK(w == std::array<double, 4>{0.5, 1.0, 2.0, 2.0});
  const std::vector<int> bal{0, 1, 2, 3, 3, 2, 1, 0};
  for (double x : class_weights(bal)) CHECK(x == 1.0);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ys(100 + static_cast<std::size_t>(trial));
    for (auto& v : ys) v = label(rng);
    for (int c = 0; c < 4; ++c) ys[static_cast<std::size_t>(c)] = c;
    auto ww = class_weights(ys);
    double total = 0;
    for (int v : ys) total += ww[static_cast<std::size_t>(v)];
    CHECK(total == doctest::Approx(static_cast<double>(ys.size())).epsilon(1e-12));
  }
  try {
    class_weights(std::vector<int>{0, 1, 2});
    FAIL("expected degenerate class");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateClass);
  }
}

TEST_CASE("feature schema") {
  const auto& names = feature_names();
  CHECK(names.size() == 41);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 41);
  CHECK(names[0] == "resp_rate");
  CHECK(names[11] == "race_white");
  CHECK(names[18] == "gender");
  CHECK(names[19] == "TAG_resp_rate");
  CHECK(names.back() == "mask_TAG_temperature");
}

TEST_CASE("assemble_features") {
  auto f = adult_frame("s", "h", 12);
  f.masks[3][idx(Column::SpO2)] = 1;
  auto a = assemble_features(f);
  REQUIRE(a.x.rows() == 12);
  REQUIRE(a.x.cols() == 41);
  const auto& names = feature_names();
  auto col = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
  };
  CHECK(a.x(0, col("race_asian")) == 1);
  CHECK(a.x(0, col("race_white")) == 0);
  CHECK(a.x(0, col("gender")) == 1);
  CHECK(a.x(0, col("spo2")) == 88);
  for (std::size_t c = col("mask_resp_rate"); c < 41; ++c) CHECK(a.x(0, c) == 0);
  CHECK(a.x(3, col("mask_spo2")) == 1);
  CHECK(a.x(3, col("mask_TAG_spo2")) == 1);
  // SpO2 88 -> label 2 for adults without COPD; 92..97 -> 0
  CHECK(a.labels[0] == scoring::severity_label(88, scoring::PopulationGroup::AdultNoCopd));
  CHECK(a.labels[9] == 0);
  CHECK(a.x(0, col("TAG_spo2")) == scoring::tag_score(VitalKind::SpO2, 88, scoring::AgeBand::Adult18plus));

  auto undefined_race = f;
  for (auto& r : undefined_race.rows) r[idx(Column::Race)] = kRaceUndefined;
  auto u = assemble_features(undefined_race);
  for (std::size_t c = col("race_white"); c < col("gender"); ++c) CHECK(u.x(0, c) == 0);

  try {
    assemble_features(adult_frame("s", "h", 3, 8, 1));
    FAIL("expected unsupported population");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedPopulation);
  }
}

TEST_CASE("build_dataset keeps patients in one split and standardizes from train") {
  std::vector<MaskedFrame> frames;
  for (int p = 0; p < 16; ++p) {
    for (int h = 0; h < 2; ++h) {
      auto f = adult_frame("s" + std::to_string(p), "h" + std::to_string(p) + "_" + std::to_string(h), 20,
                           30 + p);
      frames.push_back(f);
    }
  }
  frames.push_back(adult_frame("kid", "hk", 20, 6, 1));
  DatasetConfig cfg;
  auto d = build_dataset(frames, cfg, 9, 2);
  CHECK(d.excluded.size() == 1);
  std::array<std::set<std::string>, 3> subj;
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& a : d.admissions[s]) subj[s].insert(a.subject_id);
    CHECK(d.rows[s].y.size() == d.admissions[s].size() * 15);
  }
  CHECK(d.split.counts() == std::array<std::size_t, 3>{12, 2, 2});
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t t = s + 1; t < 3; ++t) {
      for (const auto& id : subj[s]) CHECK(subj[t].count(id) == 0);
    }
  }
  // Train age column has mean 0 after standardization.
  double sum = 0;
  for (std::size_t r = 0; r < d.rows[0].x.rows(); ++r) sum += d.rows[0].x(r, 6);
  CHECK(std::abs(sum) < 1e-9);
  CHECK(d.windows == 33 * 0 + 32 * 11);
  const auto m = d.manifest(cfg);
  CHECK(m["features"].size() == 41);

  const auto dir = std::filesystem::temp_directory_path() / "hypox_dataset_test";
  std::filesystem::create_directories(dir);
  write_gbm_csv((dir / "train.csv").string(), d.rows[0], "seed=9");
  auto back = read_gbm_csv((dir / "train.csv").string());
  CHECK(back.y == d.rows[0].y);
  CHECK(back.x == d.rows[0].x);
  write_sequence_csv((dir / "seq.csv").string(), d.admissions[1], cfg, "seed=9");
  auto seq = csv::Table::read_file((dir / "seq.csv").string());
  CHECK(seq.header().size() == 6 + 41 + 1);
  CHECK(seq.rows() == d.admissions[1].size() * 1024);
  std::filesystem::remove_all(dir);
}
