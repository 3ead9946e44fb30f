#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ex2 {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Bad shapes, out-of-range configuration values.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The object cannot perform the requested operation (e.g. no exact sampler).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A transition kernel hit a degenerate situation (all weights -inf, NaN gradient).
class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced by a numerical routine.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline void require_dim(Eigen::Index got, Eigen::Index want, std::string_view what) {
  if (got != want) {
    throw ArgumentError(std::string(what) + ": dimension " + std::to_string(got) +
                        " does not match expected " + std::to_string(want));
  }
}

/// log(sum(exp(v))) with the max shifted out. Returns -inf when every entry is -inf.
inline double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

/// Normalized weights from log-weights via a max-shifted exponent. A constant added to
/// every entry cancels in the shift; the result is bit-identical whenever the addition
/// itself is exact in floating point.
inline Vector softmax(const Vector& log_w) {
  const double mx = log_w.maxCoeff();
  if (!std::isfinite(mx)) {
    throw KernelError("softmax: no finite log-weight (target/proposal support mismatch)");
  }
  Vector w = (log_w.array() - mx).exp();
  return w / w.sum();
}

inline std::string format_vector(const Vector& x) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(x[i]);
  }
  return s + ")";
}

}  // namespace ex2
