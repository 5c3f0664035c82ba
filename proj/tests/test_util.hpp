#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace stotop::test {

inline std::vector<double> random_vector(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Central finite difference of a scalar function along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double step) {
  const double x0 = x[i];
  x[i] = x0 + step;
  const double fp = f(x);
  x[i] = x0 - step;
  const double fm = f(x);
  return (fp - fm) / (2.0 * step);
}

/// Richardson-extrapolated central difference, O(step^4) truncation error.
inline double richardson_difference(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x, std::size_t i, double step) {
  const double coarse = central_difference(f, x, i, step);
  const double fine = central_difference(f, x, i, 0.5 * step);
  return (4.0 * fine - coarse) / 3.0;
}

inline double relative_error(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace stotop::test
