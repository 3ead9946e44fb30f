#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/rng.hpp"

namespace ex2 {

/// Unnormalized target density pi~ on R^d.
///
/// The normalizing constant is dropped consistently, so only differences of
/// log_density() are meaningful. Implementations are immutable after construction and
/// safe to share between threads.
class Target {
 public:
  virtual ~Target() = default;

  virtual Eigen::Index dim() const = 0;
  virtual std::string name() const = 0;

  double log_density(const Vector& x) const {
    require_dim(x.size(), dim(), "log_density");
    return do_log_density(x);
  }

  Vector grad_log_density(const Vector& x) const {
    require_dim(x.size(), dim(), "grad_log_density");
    return do_grad_log_density(x);
  }

  virtual bool has_exact_sampler() const { return false; }

  /// n i.i.d. draws from the normalized target, one per row.
  Matrix sample(Eigen::Index n, Rng& rng) const {
    if (!has_exact_sampler()) throw CapabilityError(name() + ": no exact sampler");
    return do_sample(n, rng);
  }

 protected:
  virtual double do_log_density(const Vector& x) const = 0;
  virtual Vector do_grad_log_density(const Vector& x) const = 0;
  virtual Matrix do_sample(Eigen::Index, Rng&) const {
    throw CapabilityError(name() + ": no exact sampler");
  }
};

using TargetPtr = std::shared_ptr<const Target>;

/// N(0, variance * I_d) with log pi~(x) = -|x|^2 / (2 variance).
class StdGaussianTarget final : public Target {
 public:
  explicit StdGaussianTarget(Eigen::Index dim, double variance = 1.0)
      : dim_(dim), variance_(variance) {
    if (dim < 1) throw ArgumentError("StdGaussianTarget: dim must be >= 1");
    if (!(variance > 0.0)) throw ArgumentError("StdGaussianTarget: variance must be > 0");
  }

  Eigen::Index dim() const override { return dim_; }
  std::string name() const override { return "gaussian"; }
  bool has_exact_sampler() const override { return true; }
  double variance() const { return variance_; }

 protected:
  double do_log_density(const Vector& x) const override {
    return -0.5 * x.squaredNorm() / variance_;
  }
  Vector do_grad_log_density(const Vector& x) const override { return -x / variance_; }
  Matrix do_sample(Eigen::Index n, Rng& rng) const override {
    return rng.normal_matrix(n, dim_) * std::sqrt(variance_);
  }

 private:
  Eigen::Index dim_;
  double variance_;
};

/// Isotropic Gaussian mixture sum_i beta_i exp(-|x - mu_i|^2 / (2 sigma^2)).
class GaussianMixtureTarget final : public Target {
 public:
  GaussianMixtureTarget(std::vector<Vector> centers, std::vector<double> weights,
                        double variance)
      : centers_(std::move(centers)), weights_(std::move(weights)), variance_(variance) {
    if (centers_.empty()) throw ArgumentError("GaussianMixtureTarget: no centers");
    if (centers_.size() != weights_.size())
      throw ArgumentError("GaussianMixtureTarget: centers and weights differ in length");
    if (!(variance_ > 0.0)) throw ArgumentError("GaussianMixtureTarget: variance must be > 0");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0)) throw ArgumentError("GaussianMixtureTarget: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ArgumentError("GaussianMixtureTarget: weights must sum to 1");
    for (const auto& c : centers_) require_dim(c.size(), centers_.front().size(), "mixture center");
    log_weights_.resize(static_cast<Eigen::Index>(weights_.size()));
    for (std::size_t i = 0; i < weights_.size(); ++i)
      log_weights_[static_cast<Eigen::Index>(i)] = std::log(weights_[i]);
  }

  Eigen::Index dim() const override { return centers_.front().size(); }
  std::string name() const override { return "mixture"; }
  bool has_exact_sampler() const override { return true; }

  const std::vector<Vector>& centers() const { return centers_; }
  const std::vector<double>& weights() const { return weights_; }
  double variance() const { return variance_; }

  /// Mixture mean sum_i beta_i mu_i.
  Vector mean() const {
    Vector m = Vector::Zero(dim());
    for (std::size_t i = 0; i < centers_.size(); ++i) m += weights_[i] * centers_[i];
    return m;
  }

  /// Index of the nearest center (ties to the lowest index).
  std::size_t nearest_center(const Vector& x) const {
    std::size_t best = 0;
    double best_d = (x - centers_[0]).squaredNorm();
    for (std::size_t i = 1; i < centers_.size(); ++i) {
      const double d = (x - centers_[i]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

 protected:
  double do_log_density(const Vector& x) const override { return log_sum_exp(component_logs(x)); }

  Vector do_grad_log_density(const Vector& x) const override {
    const Vector r = softmax(component_logs(x));
    Vector g = Vector::Zero(dim());
    for (std::size_t i = 0; i < centers_.size(); ++i)
      g += r[static_cast<Eigen::Index>(i)] * (centers_[i] - x);
    return g / variance_;
  }

  Matrix do_sample(Eigen::Index n, Rng& rng) const override {
    const double sigma = std::sqrt(variance_);
    Matrix out(n, dim());
    for (Eigen::Index row = 0; row < n; ++row) {
      const double u = rng.uniform();
      double cum = 0.0;
      std::size_t k = weights_.size() - 1;
      for (std::size_t i = 0; i < weights_.size(); ++i) {
        cum += weights_[i];
        if (u < cum) {
          k = i;
          break;
        }
      }
      for (Eigen::Index j = 0; j < dim(); ++j) out(row, j) = centers_[k][j] + sigma * rng.normal();
    }
    return out;
  }

 private:
  Vector component_logs(const Vector& x) const {
    Vector logs(log_weights_.size());
    for (std::size_t i = 0; i < centers_.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      logs[k] = log_weights_[k] - 0.5 * (x - centers_[i]).squaredNorm() / variance_;
    }
    return logs;
  }

  std::vector<Vector> centers_;
  std::vector<double> weights_;
  Vector log_weights_;
  double variance_;
};

/// Neal's funnel, written as the exact density of X_1 ~ N(0, a^2),
/// X_i | X_1 ~ N(0, e^{2 b X_1}) for i >= 2:
///   log pi~(x) = -x_1^2/(2a^2) - 1/2 sum_{i>=2} (x_i^2 e^{-2 b x_1} + 2 b x_1).
class FunnelTarget final : public Target {
 public:
  FunnelTarget(Eigen::Index dim, double a, double b) : dim_(dim), a_(a), b_(b) {
    if (dim < 2) throw ArgumentError("FunnelTarget: dim must be >= 2");
    if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("FunnelTarget: a and b must be > 0");
  }

  Eigen::Index dim() const override { return dim_; }
  std::string name() const override { return "funnel"; }
  bool has_exact_sampler() const override { return true; }
  double a() const { return a_; }
  double b() const { return b_; }

  /// Reparametrization map z -> x.
  Vector from_standard(const Vector& z) const {
    require_dim(z.size(), dim_, "FunnelTarget::from_standard");
    Vector x(dim_);
    x[0] = a_ * z[0];
    const double scale = std::exp(b_ * x[0]);
    x.tail(dim_ - 1) = scale * z.tail(dim_ - 1);
    return x;
  }

 protected:
  double do_log_density(const Vector& x) const override {
    const double x1 = x[0];
    const double tail = x.tail(dim_ - 1).squaredNorm();
    return -0.5 * x1 * x1 / (a_ * a_) -
           0.5 * (tail * std::exp(-2.0 * b_ * x1) + 2.0 * b_ * x1 * static_cast<double>(dim_ - 1));
  }

  Vector do_grad_log_density(const Vector& x) const override {
    const double x1 = x[0];
    const double e = std::exp(-2.0 * b_ * x1);
    Vector g(dim_);
    g[0] = -x1 / (a_ * a_) + b_ * e * x.tail(dim_ - 1).squaredNorm() -
           b_ * static_cast<double>(dim_ - 1);
    g.tail(dim_ - 1) = -e * x.tail(dim_ - 1);
    return g;
  }

  Matrix do_sample(Eigen::Index n, Rng& rng) const override {
    Matrix out(n, dim_);
    for (Eigen::Index row = 0; row < n; ++row)
      out.row(row) = from_standard(rng.normal_vector(dim_)).transpose();
    return out;
  }

 private:
  Eigen::Index dim_;
  double a_;
  double b_;
};

/// Banana-shaped target on pairs (x_{2i-1}, x_{2i}) (1-based):
///   log pi~(x) = -sum_i [ x_{2i}^2/(2a^2) + (x_{2i-1} - b x_{2i}^2 + a^2 b)^2 / 2 ].
/// Exact sampler: Y_{2i} = a Z_{2i}, Y_{2i-1} = Z_{2i-1} + b Y_{2i}^2 - a^2 b.
class BananaTarget final : public Target {
 public:
  BananaTarget(Eigen::Index dim, double a, double b) : dim_(dim), a_(a), b_(b) {
    if (dim < 2 || dim % 2 != 0) throw ArgumentError("BananaTarget: dim must be even and >= 2");
    if (!(a > 0.0)) throw ArgumentError("BananaTarget: a must be > 0");
  }

  Eigen::Index dim() const override { return dim_; }
  std::string name() const override { return "banana"; }
  bool has_exact_sampler() const override { return true; }
  double a() const { return a_; }
  double b() const { return b_; }

  Vector from_standard(const Vector& z) const {
    require_dim(z.size(), dim_, "BananaTarget::from_standard");
    Vector y(dim_);
    for (Eigen::Index i = 0; i < dim_; i += 2) {
      y[i + 1] = a_ * z[i + 1];
      y[i] = z[i] + b_ * y[i + 1] * y[i + 1] - a_ * a_ * b_;
    }
    return y;
  }

 protected:
  double do_log_density(const Vector& x) const override {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < dim_; i += 2) {
      const double ye = x[i + 1];
      const double r = x[i] - b_ * ye * ye + a_ * a_ * b_;
      acc += 0.5 * ye * ye / (a_ * a_) + 0.5 * r * r;
    }
    return -acc;
  }

  Vector do_grad_log_density(const Vector& x) const override {
    Vector g(dim_);
    for (Eigen::Index i = 0; i < dim_; i += 2) {
      const double ye = x[i + 1];
      const double r = x[i] - b_ * ye * ye + a_ * a_ * b_;
      g[i] = -r;
      g[i + 1] = -ye / (a_ * a_) + 2.0 * b_ * ye * r;
    }
    return g;
  }

  Matrix do_sample(Eigen::Index n, Rng& rng) const override {
    Matrix out(n, dim_);
    for (Eigen::Index row = 0; row < n; ++row)
      out.row(row) = from_standard(rng.normal_vector(dim_)).transpose();
    return out;
  }

 private:
  Eigen::Index dim_;
  double a_;
  double b_;
};

namespace presets {

/// Vertices of an equilateral triangle with the given side, centered at the origin.
inline std::vector<Vector> triangle_centers(double side) {
  const double radius = side / std::sqrt(3.0);
  std::vector<Vector> c;
  for (int k = 0; k < 3; ++k) {
    const double angle = M_PI / 2.0 + 2.0 * M_PI * k / 3.0;
    Vector v(2);
    v << radius * std::cos(angle), radius * std::sin(angle);
    c.push_back(v);
  }
  return c;
}

inline std::shared_ptr<GaussianMixtureTarget> mixture_2d_equal() {
  return std::make_shared<GaussianMixtureTarget>(triangle_centers(4.0 * std::sqrt(3.0)),
                                                 std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3},
                                                 1.0);
}

inline std::shared_ptr<GaussianMixtureTarget> mixture_2d_uneven() {
  return std::make_shared<GaussianMixtureTarget>(triangle_centers(4.0 * std::sqrt(3.0)),
                                                 std::vector<double>{2.0 / 3, 1.0 / 6, 1.0 / 6},
                                                 1.0);
}

inline std::shared_ptr<FunnelTarget> funnel(Eigen::Index dim) {
  return std::make_shared<FunnelTarget>(dim, 2.0, 0.5);
}

inline std::shared_ptr<BananaTarget> banana(Eigen::Index dim) {
  return std::make_shared<BananaTarget>(dim, 5.0, 0.02);
}

}  // namespace presets

}  // namespace ex2
