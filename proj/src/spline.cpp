#include "hypox/spline.hpp"

#include <algorithm>

#include "hypox/common.hpp"

namespace hypox {

NaturalCubicSpline::NaturalCubicSpline(std::span<const double> x, std::span<const double> y)
    : x_(x.begin(), x.end()), y_(y.begin(), y.end()), m_(x.size(), 0.0) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw Error(ErrorKind::InvalidInput, "spline needs >= 2 matching knots");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw Error(ErrorKind::InvalidInput, "spline knots must increase");
  }
  if (n == 2) return;
  // Thomas algorithm on the interior equations.
  const std::size_t k = n - 2;
  std::vector<double> a(k), b(k), c(k), d(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
    a[i - 1] = h0;
    b[i - 1] = 2 * (h0 + h1);
    c[i - 1] = h1;
    d[i - 1] = 6 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  m_[k] = d[k - 1] / b[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (d[i] - c[i] * m_[i + 2]) / b[i];
}

double NaturalCubicSpline::operator()(double t) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), t);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  i = std::min(i, x_.size() - 2);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h, b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

}  // namespace hypox
