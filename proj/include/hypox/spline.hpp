#pragma once

#include <span>
#include <vector>

namespace hypox {

/// Natural cubic spline through (x[i], y[i]) with zero second derivative at
/// both ends. Kept as a reference to compare against linear interpolation;
/// unlike the latter it can overshoot its knots.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::span<const double> x, std::span<const double> y);

  [[nodiscard]] double operator()(double t) const;

 private:
  std::vector<double> x_, y_, m_;  // m_: second derivatives at the knots
};

}  // namespace hypox
