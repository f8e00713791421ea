#include "hypox/impute.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace hypox::impute {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Most frequent value; ties go to the smaller value.
double mode_of(const std::vector<double>& v) {
  std::map<double, std::size_t> counts;
  for (double x : v) ++counts[x];
  double best = counts.begin()->first;
  std::size_t best_n = 0;
  for (const auto& [x, n] : counts) {
    if (n > best_n) {
      best = x;
      best_n = n;
    }
  }
  return best;
}

std::vector<double> observed(const Matrix& x, std::size_t c) {
  std::vector<double> out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (!std::isnan(x(r, c))) out.push_back(x(r, c));
  }
  return out;
}

std::vector<ColumnSpec> numeric_specs(std::size_t n) {
  std::vector<ColumnSpec> s(n);
  for (std::size_t c = 0; c < n; ++c) s[c].name = "c" + std::to_string(c);
  return s;
}

double clamp_to(double v, const std::optional<Range>& r) { return r ? std::clamp(v, r->lo, r->hi) : v; }

}  // namespace

gbdt::GbdtConfig default_regressor() {
  auto c = gbdt::GbdtConfig::regressor();
  c.rounds = 100;
  return c;
}

void ImputeConfig::validate() const {
  if (n_iterations < 1) throw Error(ErrorKind::Config, "impute.n_iterations must be >= 1");
  if (!(tolerance >= 0.0)) throw Error(ErrorKind::Config, "impute.tolerance must be >= 0");
  if (regressor.objective != gbdt::Objective::RegressionL2) {
    throw Error(ErrorKind::Config, "impute.regressor must use the regression objective");
  }
  regressor.validate();
}

nlohmann::json ImputeConfig::to_json() const {
  return {{"n_iterations", n_iterations},
          {"tolerance", tolerance},
          {"max_train_rows", max_train_rows},
          {"regressor", regressor.to_json()}};
}

ImputeConfig ImputeConfig::from_json(const nlohmann::json& j, ImputeConfig base) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "impute config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_iterations") {
        base.n_iterations = value.get<int>();
      } else if (key == "tolerance") {
        base.tolerance = value.get<double>();
      } else if (key == "max_train_rows") {
        base.max_train_rows = value.get<std::size_t>();
      } else if (key == "regressor") {
        base.regressor = gbdt::GbdtConfig::from_json(value, base.regressor);
      } else {
        throw Error(ErrorKind::Config, "unknown impute key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "impute." + key + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

std::vector<double> initial_fill(Matrix& x, std::span<const ColumnSpec> columns) {
  if (columns.size() != x.cols()) throw Error(ErrorKind::InvalidInput, "column spec count mismatch");
  std::vector<double> fill(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto obs = observed(x, c);
    if (obs.empty()) throw Error(ErrorKind::UnimputableColumn, "column '" + columns[c].name + "' has no observed value");
    fill[c] = columns[c].categorical ? mode_of(obs) : median_of(obs);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (std::isnan(x(r, c))) x(r, c) = fill[c];
    }
  }
  return fill;
}

std::vector<double> initial_fill(Matrix& x) {
  const auto specs = numeric_specs(x.cols());
  return initial_fill(x, specs);
}

MiceResult mice(const Matrix& x, std::span<const ColumnSpec> columns, const ImputeConfig& config) {
  config.validate();
  const std::size_t n = x.rows(), p = x.cols();
  MiceResult res;
  res.mask.assign(n * p, 0);
  std::vector<std::size_t> missing_count(p, 0);
  std::vector<double> scale(p, 1.0);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      if (std::isnan(x(r, c))) {
        res.mask[r * p + c] = 1;
        ++missing_count[c];
      }
    }
    const auto obs = observed(x, c);
    if (obs.size() > 1) {
      const double mean = std::accumulate(obs.begin(), obs.end(), 0.0) / static_cast<double>(obs.size());
      double ss = 0;
      for (double v : obs) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(obs.size()));
      if (sd > 0) scale[c] = sd;
    }
  }
  res.values = x;
  const auto fill = initial_fill(res.values, columns);
  for (std::size_t c = 0; c < p; ++c) {
    if (columns[c].categorical) continue;
    for (std::size_t r = 0; r < n; ++r) {
      if (res.mask[r * p + c]) res.values(r, c) = clamp_to(fill[c], columns[c].clamp);
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < p; ++c) {
    // Categorical columns keep their mode; only numeric columns are regressed.
    if (missing_count[c] > 0 && !columns[c].categorical && p > 1) order.push_back(c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return missing_count[a] < missing_count[b]; });

  res.audit = {{"column_order", nlohmann::json::array()}, {"sweeps", nlohmann::json::array()}};
  for (auto c : order) res.audit["column_order"].push_back(columns[c].name);
  if (order.empty()) {
    res.converged = true;
    return res;
  }

  std::mt19937_64 rng(config.regressor.seed);
  for (int sweep = 1; sweep <= config.n_iterations; ++sweep) {
    double max_change = 0.0;
    nlohmann::json changes = nlohmann::json::object();
    for (auto c : order) {
      std::vector<std::size_t> train_rows, predict_rows;
      for (std::size_t r = 0; r < n; ++r) (res.mask[r * p + c] ? predict_rows : train_rows).push_back(r);
      if (config.max_train_rows > 0 && train_rows.size() > config.max_train_rows) {
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        train_rows.resize(config.max_train_rows);
        std::sort(train_rows.begin(), train_rows.end());
      }
      auto features_of = [&](std::size_t r, std::vector<double>& out) {
        out.clear();
        for (std::size_t k = 0; k < p; ++k) {
          if (k != c) out.push_back(res.values(r, k));
        }
      };
      Matrix xt;
      std::vector<double> yt, buf;
      for (auto r : train_rows) {
        features_of(r, buf);
        xt.append_row(buf);
        yt.push_back(res.values(r, c));
      }
      auto reg = config.regressor;
      reg.seed = config.regressor.seed + static_cast<std::uint64_t>(sweep) * 1000 + c;
      const auto model = gbdt::fit_regressor(xt, yt, reg);
      double sum_change = 0.0;
      for (auto r : predict_rows) {
        features_of(r, buf);
        const double v = clamp_to(model.predict_value(buf), columns[c].clamp);
        const double change = std::abs(v - res.values(r, c));
        sum_change += change;
        max_change = std::max(max_change, change / scale[c]);
        res.values(r, c) = v;
      }
      changes[columns[c].name] = sum_change / static_cast<double>(predict_rows.size());
    }
    res.audit["sweeps"].push_back({{"sweep", sweep}, {"mean_abs_change", changes}, {"max_scaled_change", max_change}});
    res.sweeps = sweep;
    if (max_change < config.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.audit["converged"] = res.converged;
  return res;
}

nlohmann::json impute_admissions(std::vector<AdmissionSeries>& series, const ImputeConfig& config,
                                 const SanitizeRanges& ranges) {
  std::vector<ColumnSpec> specs(kRawColumnCount);
  for (std::size_t c = 0; c < kRawColumnCount; ++c) {
    const auto col = static_cast<Column>(c);
    specs[c].name = std::string(column_name(col));
    specs[c].categorical = is_categorical(col);
    if (c < kVitalCount) specs[c].clamp = ranges[static_cast<VitalKind>(c)];
  }
  Matrix x;
  for (const auto& s : series) {
    for (const auto& row : s.rows) x.append_row(std::span<const double>(row.data(), kRawColumnCount));
  }
  if (x.rows() == 0) return {{"rows", 0}};
  auto res = mice(x, specs, config);

  std::size_t r0 = 0;
  for (auto& s : series) {
    if (s.masks.size() != s.rows.size()) s.masks.assign(s.rows.size(), MaskRow{});
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t c = 0; c < kRawColumnCount; ++c) {
        if (res.mask[(r0 + i) * kRawColumnCount + c]) {
          s.rows[i][c] = res.values(r0 + i, c);
          s.masks[i][c] = 1;
        }
      }
    }
    for (std::size_t c = 0; c < kRawColumnCount; ++c) {
      const auto col = static_cast<Column>(c);
      if (!is_demographic(col)) continue;
      std::vector<double> imputed;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (res.mask[(r0 + i) * kRawColumnCount + c]) imputed.push_back(s.rows[i][c]);
      }
      if (imputed.empty()) continue;
      const double v = is_categorical(col)
                           ? mode_of(imputed)
                           : std::accumulate(imputed.begin(), imputed.end(), 0.0) / static_cast<double>(imputed.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (res.mask[(r0 + i) * kRawColumnCount + c]) s.rows[i][c] = v;
      }
    }
    r0 += s.size();
  }
  auto audit = res.audit;
  audit["rows"] = x.rows();
  audit["sweeps_run"] = res.sweeps;
  nlohmann::json missing = nlohmann::json::object();
  for (std::size_t c = 0; c < kRawColumnCount; ++c) {
    std::size_t m = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) m += res.mask[r * kRawColumnCount + c];
    missing[specs[c].name] = m;
  }
  audit["imputed_cells"] = missing;
  return audit;
}

}  // namespace hypox::impute
