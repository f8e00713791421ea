#include "hypox/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hypox/common.hpp"
#include "hypox/csv.hpp"

namespace hypox::analysis {

namespace {

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t cols) {
  if (names.empty()) {
    for (std::size_t c = 0; c < cols; ++c) names.push_back("x" + std::to_string(c));
  }
  if (names.size() != cols) throw Error(ErrorKind::InvalidInput, "name count differs from column count");
  return names;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : m.row(r)) row.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
    j.push_back(row);
  }
  return j;
}

std::ofstream open_out(const std::string& path, const std::string& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + path + "'");
  if (!provenance.empty()) out << "# " << provenance << '\n';
  return out;
}

double off_norm(const Matrix& a) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) s += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(s);
}

}  // namespace

CorrelationMatrix correlation_matrix(const Matrix& x, std::vector<std::string> names) {
  if (x.rows() < 2) throw Error(ErrorKind::InvalidInput, "correlation needs at least 2 rows");
  const std::size_t p = x.cols();
  CorrelationMatrix out{default_names(std::move(names), p), Matrix(p, p), std::vector<bool>(p, false)};
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      double n = 0, ma = 0, mb = 0;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        if (std::isnan(x(r, a)) || std::isnan(x(r, b))) continue;
        n += 1;
        ma += x(r, a);
        mb += x(r, b);
      }
      double r_ab = std::nan("");
      if (n >= 2) {
        ma /= n;
        mb /= n;
        double sab = 0, saa = 0, sbb = 0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
          if (std::isnan(x(r, a)) || std::isnan(x(r, b))) continue;
          const double da = x(r, a) - ma, db = x(r, b) - mb;
          sab += da * db;
          saa += da * da;
          sbb += db * db;
        }
        if (saa > 0 && sbb > 0) {
          r_ab = a == b ? 1.0 : std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
        }
        if (a == b && saa == 0) out.zero_variance[a] = true;
      }
      out.r(a, b) = out.r(b, a) = r_ab;
    }
  }
  return out;
}

nlohmann::json CorrelationMatrix::to_json() const {
  nlohmann::json zv = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (zero_variance[i]) zv.push_back(names[i]);
  }
  return {{"features", names}, {"pearson", matrix_json(r)}, {"zero_variance", zv}};
}

void CorrelationMatrix::write_csv(const std::string& path, const std::string& provenance) const {
  auto out = open_out(path, provenance);
  std::vector<std::string> header{"feature"};
  header.insert(header.end(), names.begin(), names.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<std::string> row{names[i]};
    for (double v : r.row(i)) row.push_back(csv::format_double(v));
    csv::write_row(out, row);
  }
}

Eigen jacobi_eigen(const Matrix& symmetric, double tolerance, int max_sweeps) {
  const std::size_t n = symmetric.rows();
  if (n == 0 || symmetric.cols() != n) throw Error(ErrorKind::InvalidInput, "eigen solver needs a square matrix");
  double scale = 0;
  for (double v : symmetric.data()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "eigen solver input is not finite");
    scale = std::max(scale, std::abs(v));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(symmetric(i, j) - symmetric(j, i)) > 1e-12 * std::max(1.0, scale)) {
        throw Error(ErrorKind::InvalidInput, "eigen solver input is not symmetric");
      }
    }
  }
  Matrix a = symmetric;
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;
  // Rounding keeps the off-diagonal norm near eps * |A|; do not ask for less.
  const double target = std::max(tolerance, 1e-15 * scale * static_cast<double>(n));
  int sweeps = 0;
  while (off_norm(a) >= target) {
    if (sweeps == max_sweeps) throw Error(ErrorKind::Training, "Jacobi eigen solver did not converge");
    ++sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  Eigen e;
  e.sweeps = sweeps;
  e.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    e.values.push_back(a(order[k], order[k]));
    for (std::size_t i = 0; i < n; ++i) e.vectors(i, k) = v(i, order[k]);
  }
  return e;
}

PcaResult pca(const Matrix& x, std::vector<std::string> names, bool standardize) {
  const std::size_t p = x.cols(), n = x.rows();
  if (p < 2) throw Error(ErrorKind::InvalidInput, "PCA needs at least 2 columns");
  if (n < 2) throw Error(ErrorKind::InvalidInput, "PCA needs at least 2 rows");
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "PCA input must be complete and finite");
  }
  PcaResult res;
  res.names = default_names(std::move(names), p);
  Matrix z = x;
  for (std::size_t c = 0; c < p; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < n; ++r) mean += z(r, c);
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t r = 0; r < n; ++r) ss += (z(r, c) - mean) * (z(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double div = standardize && sd > 0 ? sd : 1.0;
    for (std::size_t r = 0; r < n; ++r) z(r, c) = (z(r, c) - mean) / div;
  }
  res.covariance = Matrix(p, p);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a; b < p; ++b) {
      double s = 0;
      for (std::size_t r = 0; r < n; ++r) s += z(r, a) * z(r, b);
      res.covariance(a, b) = res.covariance(b, a) = s / static_cast<double>(n - 1);
    }
  }
  auto eig = jacobi_eigen(res.covariance);
  double total = 0;
  for (double& l : eig.values) {
    if (l < 0 && l > -1e-12 * std::max(1.0, std::abs(eig.values.front()))) l = 0.0;
    total += l;
  }
  res.eigenvalues = eig.values;
  res.components = Matrix(p, p);
  res.loadings = Matrix(p, p);
  for (std::size_t k = 0; k < p; ++k) {
    res.explained_ratio.push_back(total > 0 ? eig.values[k] / total : 0.0);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < p; ++i) {
      if (std::abs(eig.vectors(i, k)) > std::abs(eig.vectors(arg, k))) arg = i;
    }
    const double sign = eig.vectors(arg, k) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < p; ++i) {
      res.components(k, i) = sign * eig.vectors(i, k);
      res.loadings(k, i) = res.components(k, i) * std::sqrt(std::max(0.0, eig.values[k]));
    }
  }
  return res;
}

nlohmann::json PcaResult::to_json() const {
  return {{"features", names},
          {"eigenvalues", eigenvalues},
          {"explained_variance_ratio", explained_ratio},
          {"components", matrix_json(components)},
          {"loadings", matrix_json(loadings)}};
}

void PcaResult::write_csv(const std::string& path, const std::string& provenance) const {
  auto out = open_out(path, provenance);
  std::vector<std::string> header{"component", "eigenvalue", "explained_variance_ratio"};
  for (const auto& n : names) header.push_back("loading_" + n);
  csv::write_row(out, header);
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    std::vector<std::string> row{std::to_string(k + 1), csv::format_double(eigenvalues[k]),
                                 csv::format_double(explained_ratio[k])};
    for (double v : loadings.row(k)) row.push_back(csv::format_double(v));
    csv::write_row(out, row);
  }
}

}  // namespace hypox::analysis
