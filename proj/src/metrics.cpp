#include "hypox/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hypox/csv.hpp"

namespace hypox::metrics {

namespace {

void check_label(int l) {
  if (l < 0 || l >= kNumClasses) throw Error(ErrorKind::InvalidInput, "label outside 0..3");
}

std::vector<std::uint8_t> binarize(std::span<const int> y, int cls) {
  std::vector<std::uint8_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] == cls ? 1 : 0;
  return out;
}

std::vector<double> score_column(const Matrix& scores, std::size_t n, int cls) {
  if (scores.rows() != n || scores.cols() != static_cast<std::size_t>(kNumClasses)) {
    throw Error(ErrorKind::InvalidInput, "score matrix must be n x 4");
  }
  return scores.column(static_cast<std::size_t>(cls));
}

double ratio(std::size_t num, std::size_t den, const std::string& what, std::vector<std::string>& flags) {
  if (den == 0) {
    flags.push_back(what);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(round4(*v)) : nlohmann::json(); }

}  // namespace

double round4(double v) { return std::round(v * 1e4) / 1e4; }

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorKind::InvalidInput, "y_true and y_pred differ in length");
  ConfusionMatrix c{};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    check_label(y_true[i]);
    check_label(y_pred[i]);
    ++c[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
  }
  return c;
}

double mcc(const ConfusionMatrix& c) {
  double s = 0, correct = 0, pt = 0, pp = 0, tt = 0;
  std::array<double, kNumClasses> t{}, p{};
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      const auto v = static_cast<double>(c[i][j]);
      s += v;
      t[i] += v;
      p[j] += v;
    }
    correct += static_cast<double>(c[i][i]);
  }
  for (std::size_t k = 0; k < c.size(); ++k) {
    pt += p[k] * t[k];
    pp += p[k] * p[k];
    tt += t[k] * t[k];
  }
  const double den = (s * s - pp) * (s * s - tt);
  if (den <= 0) return 0.0;
  return (correct * s - pt) / std::sqrt(den);
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::InvalidInput, "scores and labels differ in length");
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        pos_rank_sum += rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::UndefinedMetric, "AUROC needs positives and negatives");
  const double p = static_cast<double>(n_pos);
  return (pos_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorKind::InvalidInput, "scores and labels differ in length");
  const auto n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), std::uint8_t{1}));
  if (n_pos == 0) throw Error(ErrorKind::UndefinedMetric, "AUPRC needs at least one positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0, prev_recall = 0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += positive[order[j]];
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

double auroc_ovr(std::span<const int> y_true, const Matrix& scores, int cls) {
  check_label(cls);
  const auto s = score_column(scores, y_true.size(), cls);
  return auroc(s, binarize(y_true, cls));
}

double auprc_ovr(std::span<const int> y_true, const Matrix& scores, int cls) {
  check_label(cls);
  const auto s = score_column(scores, y_true.size(), cls);
  return auprc(s, binarize(y_true, cls));
}

ClassificationReport report(const ConfusionMatrix& c) {
  ClassificationReport r;
  r.confusion = c;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) r.total += c[i][j];
    correct += c[i][i];
  }
  for (std::size_t k = 0; k < c.size(); ++k) {
    std::size_t tp = c[k][k], fp = 0, fn = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (i == k) continue;
      fp += c[i][k];
      fn += c[k][i];
    }
    const std::size_t tn = r.total - tp - fp - fn;
    auto& m = r.per_class[k];
    const auto tag = "[" + std::to_string(k) + "]";
    m.support = tp + fn;
    m.precision = ratio(tp, tp + fp, "precision" + tag, r.zero_division);
    m.sensitivity = ratio(tp, tp + fn, "sensitivity" + tag, r.zero_division);
    m.specificity = ratio(tn, tn + fp, "specificity" + tag, r.zero_division);
    if (m.precision + m.sensitivity > 0) {
      m.f1 = 2 * m.precision * m.sensitivity / (m.precision + m.sensitivity);
    } else {
      r.zero_division.push_back("f1" + tag);
    }
  }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  if (!r.total) r.zero_division.emplace_back("accuracy");
  const double k = static_cast<double>(kNumClasses);
  for (const auto& m : r.per_class) {
    r.macro_precision += m.precision / k;
    r.macro_sensitivity += m.sensitivity / k;
    r.macro_specificity += m.specificity / k;
    r.macro_f1 += m.f1 / k;
    if (r.total) {
      const double w = static_cast<double>(m.support) / static_cast<double>(r.total);
      r.weighted_precision += w * m.precision;
      r.weighted_sensitivity += w * m.sensitivity;
      r.weighted_f1 += w * m.f1;
    }
  }
  r.mcc = mcc(c);
  return r;
}

ClassificationReport report(const ConfusionMatrix& c, std::span<const int> y_true, const Matrix& scores) {
  auto r = report(c);
  std::size_t n = 0;
  for (const auto& row : c) n += std::accumulate(row.begin(), row.end(), std::size_t{0});
  if (n != y_true.size()) throw Error(ErrorKind::InvalidInput, "confusion matrix total differs from y_true length");
  double sum_roc = 0, sum_pr = 0;
  int n_roc = 0, n_pr = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    auto& m = r.per_class[static_cast<std::size_t>(k)];
    try {
      m.auroc = auroc_ovr(y_true, scores, k);
      sum_roc += *m.auroc;
      ++n_roc;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedMetric) throw;
    }
    try {
      m.auprc = auprc_ovr(y_true, scores, k);
      sum_pr += *m.auprc;
      ++n_pr;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedMetric) throw;
    }
  }
  if (n_roc) r.macro_auroc = sum_roc / n_roc;
  if (n_pr) r.macro_auprc = sum_pr / n_pr;
  return r;
}

nlohmann::json ClassificationReport::to_json() const {
  using nlohmann::json;
  json classes = json::array();
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const auto& m = per_class[k];
    classes.push_back({{"class", k},
                       {"support", m.support},
                       {"precision", round4(m.precision)},
                       {"sensitivity", round4(m.sensitivity)},
                       {"specificity", round4(m.specificity)},
                       {"f1", round4(m.f1)},
                       {"auroc", opt(m.auroc)},
                       {"auprc", opt(m.auprc)}});
  }
  return {{"confusion_matrix", confusion},
          {"per_class", classes},
          {"aggregate",
           {{"total", total},
            {"accuracy", round4(accuracy)},
            {"macro_precision", round4(macro_precision)},
            {"macro_sensitivity", round4(macro_sensitivity)},
            {"macro_specificity", round4(macro_specificity)},
            {"macro_f1", round4(macro_f1)},
            {"weighted_precision", round4(weighted_precision)},
            {"weighted_sensitivity", round4(weighted_sensitivity)},
            {"weighted_f1", round4(weighted_f1)},
            {"mcc", round4(mcc)},
            {"macro_auroc", opt(macro_auroc)},
            {"macro_auprc", opt(macro_auprc)}}},
          {"zero_division", zero_division}};
}

std::vector<std::string> ClassificationReport::csv_header() {
  return {"model",           "accuracy",           "macro_precision", "macro_sensitivity",
          "macro_specificity", "macro_f1",         "weighted_precision", "weighted_sensitivity",
          "weighted_f1",     "mcc",                "macro_auroc",     "macro_auprc"};
}

std::vector<std::string> ClassificationReport::csv_row(const std::string& model) const {
  auto f = [](double v) { return csv::format_double(round4(v)); };
  auto o = [&](const std::optional<double>& v) { return v ? f(*v) : std::string(); };
  return {model,        f(accuracy),           f(macro_precision), f(macro_sensitivity),
          f(macro_specificity), f(macro_f1),   f(weighted_precision), f(weighted_sensitivity),
          f(weighted_f1), f(mcc),              o(macro_auroc),     o(macro_auprc)};
}

}  // namespace hypox::metrics
