#pragma once
// Independent reference computations for the tests. Nothing here calls into the library
// except for the value types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ex2mcmc/core.hpp"

namespace oracle {

using ex2::Matrix;
using ex2::Vector;

/// Central differences of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// Jacobian of a vector map by central differences, columns are d f / d x_j.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a[j] += h;
    b[j] -= h;
    J.col(j) = (f(a) - f(b)) / (2.0 * h);
  }
  return J;
}

inline double rel_err(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov statistic of a sample against a CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Asymptotic KS critical value at level 0.001.
inline double ks_critical_001(std::size_t n) { return 1.95 / std::sqrt(static_cast<double>(n)); }

/// Pearson chi-square statistic against expected cell probabilities.
inline double chi_square(const std::vector<double>& counts, const std::vector<double>& probs) {
  double total = 0.0;
  for (double c : counts) total += c;
  double s = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = total * probs[i];
    s += (counts[i] - e) * (counts[i] - e) / e;
  }
  return s;
}

/// Upper 0.999 quantile of chi-square(k) via the Wilson-Hilferty approximation.
inline double chi_square_crit_999(int k) {
  const double z = 3.090232306167813;
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace oracle
