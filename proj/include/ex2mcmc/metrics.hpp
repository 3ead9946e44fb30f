#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/kernels.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"

namespace ex2 {

inline double sample_sd(const Vector& v) {
  const double n = static_cast<double>(v.size());
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / (n - 1.0));
}

/// Silverman's rule, 1.06 sd n^(-1/5).
inline double silverman_bandwidth(const Vector& v) {
  return 1.06 * sample_sd(v) * std::pow(static_cast<double>(v.size()), -0.2);
}

/// Gaussian KDE evaluated on a fixed uniform grid and renormalized there.
class Kde1d {
 public:
  Kde1d(Vector centers, double bandwidth, Vector grid)
      : centers_(std::move(centers)), h_(bandwidth), grid_(std::move(grid)) {
    if (!(h_ > 0.0) || !std::isfinite(h_)) throw ArgumentError("Kde1d: bandwidth must be positive");
    if (grid_.size() < 2) throw ArgumentError("Kde1d: grid needs at least two points");
    for (Eigen::Index i = 1; i < grid_.size(); ++i)
      if (!(grid_[i] > grid_[i - 1])) throw ArgumentError("Kde1d: grid must be strictly increasing");
    if (centers_.size() < 1) throw ArgumentError("Kde1d: no centers");
    density_ = evaluate();
  }

  static Vector uniform_grid(double lo, double hi, Eigen::Index g = 1000) {
    return Vector::LinSpaced(g, lo, hi);
  }

  double bandwidth() const { return h_; }
  const Vector& grid() const { return grid_; }
  double spacing() const { return grid_[1] - grid_[0]; }

  /// Grid values normalized so that sum(density) * spacing = 1.
  const Vector& density() const { return density_; }

 private:
  // Truncated sums over sorted centers: contributions beyond 8 bandwidths are < 1e-14.
  Vector evaluate() const {
    std::vector<double> c(centers_.data(), centers_.data() + centers_.size());
    std::sort(c.begin(), c.end());
    const double cut = 8.0 * h_;
    Vector out(grid_.size());
    for (Eigen::Index g = 0; g < grid_.size(); ++g) {
      const double x = grid_[g];
      auto lo = std::lower_bound(c.begin(), c.end(), x - cut);
      auto hi = std::upper_bound(lo, c.end(), x + cut);
      double s = 0.0;
      for (auto it = lo; it != hi; ++it) {
        const double u = (x - *it) / h_;
        s += std::exp(-0.5 * u * u);
      }
      out[g] = s;
    }
    const double mass = out.sum() * spacing();
    if (!(mass > 0.0)) throw NumericalError("Kde1d: zero mass on grid (grid misses the samples)");
    return out / mass;
  }

  Vector centers_;
  double h_;
  Vector grid_;
  Vector density_;
};

// -- ESS ------------------------------------------------------------------------------

struct EssReport {
  Vector per_coordinate;  // clipped to (0, 1]
  double mean = 0.0;
  Vector raw_per_coordinate;  // 1 / (1 + 2 sum rho) before clipping
  double raw_mean = 0.0;
};

/// Autocorrelations rho_0..rho_{n-1} of a series via zero-padded FFT.
inline Vector autocorrelation(const Vector& series) {
  const Eigen::Index n = series.size();
  std::size_t len = 1;
  while (len < static_cast<std::size_t>(2 * n)) len <<= 1;
  std::vector<double> buf(len, 0.0);
  const double mean = series.mean();
  for (Eigen::Index i = 0; i < n; ++i) buf[i] = series[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& s : spec) s = std::complex<double>(std::norm(s), 0.0);
  std::vector<double> acov;
  fft.inv(acov, spec);
  Vector rho(n);
  const double c0 = acov[0];
  for (Eigen::Index k = 0; k < n; ++k) rho[k] = acov[k] / c0;
  return rho;
}

/// Normalized ESS per coordinate with Geyer's initial-positive-sequence truncation:
/// sum paired autocorrelations rho_{2m} + rho_{2m+1} until the first non-positive pair.
inline EssReport ess(const Matrix& trajectory) {
  const Eigen::Index n = trajectory.rows();
  const Eigen::Index d = trajectory.cols();
  if (n < 10) throw ArgumentError("ess: need at least 10 samples");
  EssReport rep;
  rep.per_coordinate.resize(d);
  rep.raw_per_coordinate.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const Vector col = trajectory.col(i);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum();
    if (!(var > 0.0)) throw ArgumentError("ess: coordinate " + std::to_string(i) + " has zero variance");
    const Vector rho = autocorrelation(col);
    double tau = -1.0;  // -rho_0 + 2 sum of pairs
    for (Eigen::Index m = 0; 2 * m + 1 < n; ++m) {
      const double pair = rho[2 * m] + rho[2 * m + 1];
      if (!(pair > 0.0)) break;
      tau += 2.0 * pair;
    }
    // tau <= 0 only for antithetic series; their ESS saturates at 1
    const double raw = tau > 0.0 ? 1.0 / tau : std::numeric_limits<double>::infinity();
    rep.raw_per_coordinate[i] = raw;
    rep.per_coordinate[i] = std::min(1.0, raw);
  }
  rep.mean = rep.per_coordinate.mean();
  rep.raw_mean = rep.raw_per_coordinate.mean();
  return rep;
}

// -- total variation --------------------------------------------------------------------

/// Half L1 distance between two grid densities sharing spacing dx.
inline double grid_tv(const Vector& p, const Vector& q, double dx) {
  require_dim(q.size(), p.size(), "grid_tv");
  return 0.5 * (p - q).cwiseAbs().sum() * dx;
}

/// TV between 1D sample sets via KDEs on a common grid of g points covering the pooled
/// range extended by three bandwidths.
inline double kde_tv_1d(const Vector& a, const Vector& b, Eigen::Index g = 1000) {
  const double ha = silverman_bandwidth(a);
  const double hb = silverman_bandwidth(b);
  if (!(ha > 0.0) || !(hb > 0.0)) throw ArgumentError("kde_tv_1d: degenerate samples (zero spread)");
  const double h = std::max(ha, hb);
  const double lo = std::min(a.minCoeff(), b.minCoeff()) - 3.0 * h;
  const double hi = std::max(a.maxCoeff(), b.maxCoeff()) + 3.0 * h;
  const Vector grid = Kde1d::uniform_grid(lo, hi, g);
  const Kde1d pa(a, ha, grid);
  const Kde1d pb(b, hb, grid);
  return grid_tv(pa.density(), pb.density(), pa.spacing());
}

/// TV between a 1D sample KDE and a (possibly unnormalized) log-density on [lo, hi].
inline double kde_tv_to_density(const Vector& samples, const std::function<double(double)>& log_density,
                                double lo, double hi, Eigen::Index g = 1000) {
  const double h = silverman_bandwidth(samples);
  if (!(h > 0.0)) throw ArgumentError("kde_tv_to_density: degenerate samples (zero spread)");
  const Vector grid = Kde1d::uniform_grid(lo, hi, g);
  const Kde1d p(samples, h, grid);
  Vector q(g);
  for (Eigen::Index i = 0; i < g; ++i) q[i] = log_density(grid[i]);
  q = (q.array() - q.maxCoeff()).exp();
  q /= q.sum() * p.spacing();
  return grid_tv(p.density(), q, p.spacing());
}

/// Average 1D KDE TV over random unit directions. Directions come from `rng` only, so
/// swapping the sample arguments with the same seed gives the same value.
inline double sliced_tv(const Matrix& samples, const Matrix& reference, int n_projections, Rng& rng) {
  require_dim(reference.cols(), samples.cols(), "sliced_tv");
  if (samples.rows() < 50 || reference.rows() < 50) throw ArgumentError("sliced_tv: need at least 50 samples each");
  if (n_projections < 1) throw ArgumentError("sliced_tv: need at least one projection");
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    Vector dir = rng.normal_vector(samples.cols());
    dir.normalize();
    total += kde_tv_1d(samples * dir, reference * dir);
  }
  return total / n_projections;
}

inline double sliced_tv(const Matrix& samples, const Matrix& reference, Rng& rng) {
  return sliced_tv(samples, reference, 25, rng);
}

struct Grid2d {
  double x_min = -9.0, x_max = 9.0;
  double y_min = -9.0, y_max = 9.0;
  Eigen::Index nx = 150, ny = 150;
};

struct TvKl {
  double tv = 0.0;
  double kl = 0.0;
};

/// Product-kernel KDE of 2D samples against a target density, both normalized on the
/// grid. KL is KL(kde || target) with a 1e-12 floor inside the logarithm.
inline TvKl kde_tv_and_kl(const Matrix& samples, const Target& target, const Grid2d& grid = {}) {
  if (samples.cols() != 2 || target.dim() != 2) throw CapabilityError("kde_tv_and_kl: only d = 2 is supported");
  if (samples.rows() < 2) throw ArgumentError("kde_tv_and_kl: need at least two samples");
  const Vector gx = Vector::LinSpaced(grid.nx, grid.x_min, grid.x_max);
  const Vector gy = Vector::LinSpaced(grid.ny, grid.y_min, grid.y_max);
  const double cell = (gx[1] - gx[0]) * (gy[1] - gy[0]);
  const Vector sx = samples.col(0), sy = samples.col(1);
  const double hx = silverman_bandwidth(sx), hy = silverman_bandwidth(sy);
  if (!(hx > 0.0) || !(hy > 0.0)) throw ArgumentError("kde_tv_and_kl: degenerate samples (zero spread)");

  auto kernel = [](const Vector& g, const Vector& s, double h) {
    Matrix k(g.size(), s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j)
      k.col(j) = (-0.5 * ((g.array() - s[j]) / h).square()).exp();
    return k;
  };
  Matrix p = kernel(gx, sx, hx) * kernel(gy, sy, hy).transpose();  // nx x ny
  const double pm = p.sum() * cell;
  if (!(pm > 0.0)) throw NumericalError("kde_tv_and_kl: KDE has no mass on the grid");
  p /= pm;

  Matrix q(grid.nx, grid.ny);
  Vector pt(2);
  for (Eigen::Index i = 0; i < grid.nx; ++i)
    for (Eigen::Index j = 0; j < grid.ny; ++j) {
      pt << gx[i], gy[j];
      q(i, j) = target.log_density(pt);
    }
  q = (q.array() - q.maxCoeff()).exp();
  q /= q.sum() * cell;

  TvKl out;
  out.tv = 0.5 * (p - q).cwiseAbs().sum() * cell;
  const double floor = 1e-12;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double a = p.data()[i];
    if (a > 0.0) kl += a * std::log(std::max(a, floor) / std::max(q.data()[i], floor));
  }
  out.kl = kl * cell;
  return out;
}

// -- acceptance ----------------------------------------------------------------------------

struct AcceptanceSummary {
  double global_move_rate = 0.0;
  double mala_rate = 0.0;  // 0 when no MALA steps were taken
  long steps = 0;
  long mala_steps = 0;
};

inline AcceptanceSummary acceptance_summary(const ChainStats& s) {
  if (s.steps <= 0) throw ArgumentError("acceptance_summary: empty stream");
  AcceptanceSummary a;
  a.steps = s.steps;
  a.mala_steps = s.mala_steps;
  a.global_move_rate = static_cast<double>(s.global_moves) / static_cast<double>(s.steps);
  a.mala_rate = s.mala_steps > 0 ? static_cast<double>(s.mala_accepts) / static_cast<double>(s.mala_steps) : 0.0;
  return a;
}

inline AcceptanceSummary acceptance_summary(const std::vector<StepRecord>& records) {
  ChainStats s;
  for (const auto& r : records) s.add(r);
  return acceptance_summary(s);
}

}  // namespace ex2
