#include <doctest.h>

#include <cmath>
#include <random>

#include "hypox/impute.hpp"

using namespace hypox;
using namespace hypox::impute;

namespace {

const double kNaN = std::nan("");

ImputeConfig fast_config() {
  ImputeConfig c;
  c.regressor.rounds = 60;
  c.regressor.learning_rate = 0.3;
  return c;
}

std::vector<ColumnSpec> specs(std::size_t n) {
  std::vector<ColumnSpec> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i].name = "c" + std::to_string(i);
  return s;
}

}  // namespace

TEST_CASE("initial_fill uses the median of observed values") {
  Matrix x(3, 1);
  x(0, 0) = 1;
  x(1, 0) = kNaN;
  x(2, 0) = 3;
  initial_fill(x);
  CHECK(x(1, 0) == 2);

  Matrix full(2, 2, 4.0);
  auto copy = full;
  initial_fill(copy);
  CHECK(copy == full);

  Matrix empty_col(2, 2, kNaN);
  empty_col(0, 0) = 1;
  empty_col(1, 0) = 1;
  try {
    initial_fill(empty_col);
    FAIL("expected unimputable column");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnimputableColumn);
  }
}

TEST_CASE("categorical columns are filled with the mode") {
  Matrix x(5, 1);
  const double v[] = {1, 1, 0, kNaN, 1};
  for (int i = 0; i < 5; ++i) x(i, 0) = v[i];
  std::vector<ColumnSpec> s{{"gender", true, std::nullopt}};
  initial_fill(x, s);
  CHECK(x(3, 0) == 1);
}

TEST_CASE("mice on a complete frame is the identity") {
  Matrix x(20, 3);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 3; ++c) x(r, c) = static_cast<double>(r * 3 + c);
  }
  const auto sp = specs(3);
  auto res = mice(x, sp, fast_config());
  CHECK(res.values == x);
  for (auto m : res.mask) CHECK(m == 0);
  CHECK(res.converged);
}

TEST_CASE("constant column imputes the constant") {
  Matrix x(4, 2);
  const double col[] = {5, 5, kNaN, 5};
  for (std::size_t r = 0; r < 4; ++r) {
    x(r, 0) = col[r];
    x(r, 1) = static_cast<double>(r);
  }
  const auto sp = specs(2);
  auto res = mice(x, sp, fast_config());
  CHECK(res.values(2, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(res.mask[2 * 2 + 0] == 1);
  CHECK(res.mask[0] == 0);
}

TEST_CASE("correlated columns: imputed y is close to 2x") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  Matrix x(200, 2);
  for (std::size_t r = 0; r < 200; ++r) {
    x(r, 0) = u(rng);
    x(r, 1) = 2.0 * x(r, 0);
  }
  const double truth = x(57, 1);
  x(57, 1) = kNaN;
  const auto sp = specs(2);
  auto res = mice(x, sp, ImputeConfig{});
  CHECK(std::abs(res.values(57, 1) - truth) <= 0.5);
  // Observed cells are untouched.
  for (std::size_t r = 0; r < 200; ++r) {
    if (r != 57) CHECK(res.values(r, 1) == x(r, 1));
    CHECK(res.values(r, 0) == x(r, 0));
  }
}

TEST_CASE("mice invariants on a random frame") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution miss(0.2);
  Matrix x(300, 4);
  for (std::size_t r = 0; r < 300; ++r) {
    const double base = z(rng);
    x(r, 0) = 95 + 4 * base;
    x(r, 1) = 80 + 10 * base + z(rng);
    x(r, 2) = 60 + 5 * z(rng);
    x(r, 3) = base > 0 ? 1 : 0;
  }
  auto holes = x;
  for (std::size_t r = 0; r < 300; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (miss(rng)) holes(r, c) = kNaN;
    }
  }
  auto sp = specs(4);
  sp[0].clamp = Range{0, 100};
  sp[3].categorical = true;
  const auto a = mice(holes, sp, fast_config());
  const auto b = mice(holes, sp, fast_config());
  CHECK(a.values == b.values);
  CHECK(a.audit == b.audit);
  for (std::size_t r = 0; r < 300; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const bool was_missing = std::isnan(holes(r, c));
      CHECK(a.mask[r * 4 + c] == (was_missing ? 1 : 0));
      CHECK(!std::isnan(a.values(r, c)));
      if (!was_missing) CHECK(a.values(r, c) == holes(r, c));
    }
    if (a.mask[r * 4]) CHECK(a.values(r, 0) <= 100.0);
    CHECK((a.values(r, 3) == 0.0 || a.values(r, 3) == 1.0));
  }
  CHECK(a.sweeps >= 1);
  CHECK(a.sweeps <= 5);
  CHECK(a.audit["column_order"].size() == 3);
}

TEST_CASE("impute_admissions harmonises demographics and sets masks") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<AdmissionSeries> adm(4);
  for (std::size_t a = 0; a < adm.size(); ++a) {
    adm[a].subject_id = "s" + std::to_string(a);
    adm[a].hadm_id = "h" + std::to_string(a);
    for (int i = 0; i < 25; ++i) {
      adm[a].minutes.push_back(i);
      Row r = missing_row();
      for (std::size_t c = 0; c < kVitalCount; ++c) r[c] = 50 + 5 * z(rng);
      r[idx(Column::Age)] = 40 + 10.0 * static_cast<double>(a);
      r[idx(Column::Gender)] = static_cast<double>(a % 2);
      r[idx(Column::Height)] = 170;
      r[idx(Column::Weight)] = 70 + static_cast<double>(a);
      r[idx(Column::Race)] = 0;
      r[idx(Column::Copd)] = 0;
      adm[a].rows.push_back(r);
      adm[a].masks.push_back(MaskRow{});
    }
  }
  for (auto& r : adm[2].rows) r[idx(Column::Weight)] = std::nan("");
  adm[1].rows[3][idx(Column::SpO2)] = std::nan("");
  auto audit = impute_admissions(adm, fast_config());
  CHECK(audit["imputed_cells"]["weight"] == 25);
  const double w = adm[2].rows[0][idx(Column::Weight)];
  CHECK(!std::isnan(w));
  for (std::size_t i = 0; i < adm[2].size(); ++i) {
    CHECK(adm[2].rows[i][idx(Column::Weight)] == w);
    CHECK(adm[2].masks[i][idx(Column::Weight)] == 1);
  }
  CHECK(adm[1].masks[3][idx(Column::SpO2)] == 1);
  CHECK(adm[1].masks[4][idx(Column::SpO2)] == 0);
  CHECK(adm[1].rows[3][idx(Column::SpO2)] <= 100.0);
}

TEST_CASE("impute config parsing is strict") {
  auto c = ImputeConfig::from_json(nlohmann::json{{"n_iterations", 3}}, ImputeConfig{});
  CHECK(c.n_iterations == 3);
  CHECK_THROWS_AS(ImputeConfig::from_json(nlohmann::json{{"sweeps", 3}}, ImputeConfig{}), Error);
  CHECK_THROWS_AS(ImputeConfig::from_json(nlohmann::json{{"n_iterations", 0}}, ImputeConfig{}), Error);
}
