#include <doctest.h>

#include <cmath>
#include <random>

#include "hypox/metrics.hpp"
#include "oracles.hpp"

using namespace hypox;
using namespace hypox::metrics;

TEST_CASE("confusion matrix") {
  const std::vector<int> y{0, 1, 2, 3};
  auto c = confusion(y, y);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(c[i][j] == (i == j ? 1u : 0u));
  }
  const std::vector<int> t{0, 1}, p{1, 0};
  auto a = confusion(t, p);
  CHECK(a[0][1] == 1);
  CHECK(a[1][0] == 1);
  CHECK(a[0][0] == 0);
  CHECK_THROWS_AS(confusion(t, y), Error);
  CHECK_THROWS_AS(confusion(std::vector<int>{4}, std::vector<int>{0}), Error);

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> l(0, 3);
  std::vector<int> yt(20), yp(20);
  for (auto& v : yt) v = l(rng);
  for (auto& v : yp) v = l(rng);
  auto cm = confusion(yt, yp);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      std::size_t n = 0;
      for (std::size_t s = 0; s < 20; ++s) n += yt[s] == i && yp[s] == j;
      CHECK(cm[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == n);
    }
  }
}

TEST_CASE("report on perfect and degenerate predictors") {
  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0, 0};
  auto r = report(confusion(y, y));
  CHECK(r.accuracy == 1.0);
  CHECK(r.mcc == doctest::Approx(1.0));
  for (const auto& m : r.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(r.zero_division.empty());
  CHECK(r.to_json()["aggregate"]["macro_auroc"].is_null());

  const std::vector<int> all_zero(y.size(), 0);
  auto d = report(confusion(y, all_zero));
  CHECK(d.mcc == 0.0);
  CHECK(!d.zero_division.empty());
  CHECK(d.per_class[1].precision == 0.0);
}

TEST_CASE("binary AUROC example and edge cases") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> pos{0, 0, 1, 1};
  CHECK(auroc(s, pos) == doctest::Approx(0.75));
  CHECK(auprc(s, pos) == doctest::Approx(testing::sweep_auprc(s, {0, 0, 1, 1})));

  const std::vector<double> ranked{0.1, 0.2, 0.8, 0.9};
  CHECK(auroc(ranked, pos) == 1.0);
  CHECK(auprc(ranked, pos) == 1.0);
  const std::vector<double> reversed{0.9, 0.8, 0.2, 0.1};
  CHECK(auroc(reversed, pos) == 0.0);
  const std::vector<double> equal(4, 0.5);
  CHECK(auroc(equal, pos) == 0.5);
  const std::vector<std::uint8_t> one_pos{0, 0, 0, 1};
  CHECK(auprc(equal, one_pos) == doctest::Approx(0.25));

  const std::vector<std::uint8_t> none(4, 0);
  CHECK_THROWS_AS(auroc(s, none), Error);
  CHECK_THROWS_AS(auprc(s, none), Error);
}

TEST_CASE("metrics match brute-force oracles on random cases") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> label(0, 3);
  std::uniform_int_distribution<int> len(4, 30);
  std::uniform_int_distribution<int> coarse(0, 5);  // induces ties
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<int> yt(n), yp(n);
    Matrix scores(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] = label(rng);
      yp[i] = label(rng);
      double sum = 0;
      for (std::size_t c = 0; c < 4; ++c) sum += scores(i, c) = 1 + coarse(rng);
      for (std::size_t c = 0; c < 4; ++c) scores(i, c) /= sum;
    }
    auto r = report(confusion(yt, yp), yt, scores);
    CHECK(r.mcc == doctest::Approx(testing::covariance_mcc(yt, yp, 4)).epsilon(1e-10));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += yt[i] == yp[i];
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(n)).epsilon(1e-12));
    double macro_f1 = 0;
    for (int k = 0; k < 4; ++k) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool t = yt[i] == k, p = yp[i] == k;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
        tn += !t && !p;
      }
      const auto& m = r.per_class[static_cast<std::size_t>(k)];
      const double prec = tp + fp ? tp / (tp + fp) : 0.0;
      const double sens = tp + fn ? tp / (tp + fn) : 0.0;
      const double spec = tn + fp ? tn / (tn + fp) : 0.0;
      const double f1 = prec + sens ? 2 * prec * sens / (prec + sens) : 0.0;
      macro_f1 += f1 / 4;
      CHECK(m.precision == doctest::Approx(prec).epsilon(1e-12));
      CHECK(m.sensitivity == doctest::Approx(sens).epsilon(1e-12));
      CHECK(m.specificity == doctest::Approx(spec).epsilon(1e-12));
      CHECK(m.f1 == doctest::Approx(f1).epsilon(1e-12));
      std::vector<int> pos(n);
      for (std::size_t i = 0; i < n; ++i) pos[i] = yt[i] == k;
      const auto col = scores.column(static_cast<std::size_t>(k));
      const bool has_pos = tp + fn > 0, has_neg = tn + fp > 0;
      REQUIRE(m.auroc.has_value() == (has_pos && has_neg));
      REQUIRE(m.auprc.has_value() == has_pos);
      if (m.auroc) CHECK(std::abs(*m.auroc - testing::pair_auroc(col, pos)) < 1e-10);
      if (m.auprc) CHECK(std::abs(*m.auprc - testing::sweep_auprc(col, pos)) < 1e-10);
    }
    CHECK(r.macro_f1 == doctest::Approx(macro_f1).epsilon(1e-12));
  }
}

TEST_CASE("metric invariants") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> label(0, 3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> yt(40), yp(40);
    for (auto& v : yt) v = label(rng);
    for (std::size_t i = 0; i < 40; ++i) yp[i] = u(rng) < 0.6 ? yt[i] : label(rng);
    auto r = report(confusion(yt, yp));
    // Class permutation leaves MCC unchanged.
    const int perm[] = {2, 0, 3, 1};
    std::vector<int> pt(40), pp(40);
    for (std::size_t i = 0; i < 40; ++i) {
      pt[i] = perm[yt[i]];
      pp[i] = perm[yp[i]];
    }
    CHECK(report(confusion(pt, pp)).mcc == doctest::Approx(r.mcc).epsilon(1e-12));
    double lo = 1, hi = 0;
    for (const auto& m : r.per_class) {
      lo = std::min(lo, m.f1);
      hi = std::max(hi, m.f1);
    }
    CHECK(r.macro_f1 <= hi + 1e-12);
    CHECK(r.macro_f1 >= lo - 1e-12);

    std::vector<double> s(40), t(40);
    std::vector<std::uint8_t> pos(40), neg(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = u(rng);
      t[i] = std::exp(3 * s[i]);
      pos[i] = yt[i] == 1;
      neg[i] = !pos[i];
    }
    CHECK(auroc(s, pos) == doctest::Approx(auroc(t, pos)).epsilon(1e-12));
    CHECK(auroc(s, neg) == doctest::Approx(1 - auroc(s, pos)).epsilon(1e-12));
  }
}

TEST_CASE("report serialization") {
  const std::vector<int> y{0, 1, 2, 3};
  const std::vector<int> p{0, 1, 2, 2};
  auto r = report(confusion(y, p));
  auto j = r.to_json();
  CHECK(j["aggregate"]["accuracy"] == 0.75);
  CHECK(j["confusion_matrix"][3][2] == 1);
  CHECK(round4(1.0 / 3.0) == 0.3333);
  CHECK(ClassificationReport::csv_header().size() == r.csv_row("gbdt").size());
}
