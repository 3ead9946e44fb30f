#include <gtest/gtest.h>

#include "ex2mcmc/metrics.hpp"
#include "ex2mcmc/targets.hpp"
#include "oracles.hpp"

using namespace ex2;

namespace {

Matrix ar1(long n, double phi, Rng& rng) {
  Matrix x(n, 1);
  x(0, 0) = rng.normal() / std::sqrt(1.0 - phi * phi);
  for (long t = 1; t < n; ++t) x(t, 0) = phi * x(t - 1, 0) + rng.normal();
  return x;
}

/// Trapezoid integral of |p - q| / 2 for two normal densities.
double normal_tv_quadrature(double m1, double s1, double m2, double s2) {
  auto pdf = [](double x, double m, double s) { return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2 * M_PI)); };
  const double lo = std::min(m1 - 12 * s1, m2 - 12 * s2), hi = std::max(m1 + 12 * s1, m2 + 12 * s2);
  const int n = 200000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double v = std::abs(pdf(x, m1, s1) - pdf(x, m2, s2));
    s += (i == 0 || i == n) ? 0.5 * v : v;
  }
  return 0.5 * s * h;
}

}  // namespace

TEST(Ess, WhiteNoiseIsAboutOne) {
  Rng rng(1);
  const Matrix x = rng.normal_matrix(10000, 3);
  const EssReport r = ess(x);
  EXPECT_GE(r.raw_mean, 0.9);
  EXPECT_LE(r.raw_mean, 1.1);
}

TEST(Ess, Ar1MatchesClosedForm) {
  Rng rng(2);
  const double phi = 0.5;
  const EssReport r = ess(ar1(100000, phi, rng));
  const double exact = (1 - phi) / (1 + phi);
  EXPECT_NEAR(r.mean, exact, 0.15 * exact);
}

TEST(Ess, AntitheticSequenceClipsAtOne) {
  Matrix x(1000, 1);
  for (int t = 0; t < 1000; ++t) x(t, 0) = (t % 2 == 0) ? 1.0 : -1.0;
  const EssReport r = ess(x);
  EXPECT_EQ(r.per_coordinate[0], 1.0);
  EXPECT_EQ(r.mean, 1.0);
}

TEST(Ess, AutocorrelationOfAr1) {
  Rng rng(3);
  const Vector rho = autocorrelation(ar1(200000, 0.7, rng).col(0));
  EXPECT_EQ(rho[0], 1.0);
  for (int k = 1; k <= 4; ++k) EXPECT_NEAR(rho[k], std::pow(0.7, k), 0.02);
}

TEST(Ess, ZeroVarianceNamesCoordinate) {
  Rng rng(4);
  Matrix x = rng.normal_matrix(100, 3);
  x.col(2).setConstant(1.5);
  try {
    ess(x);
    FAIL() << "expected ArgumentError";
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 2"), std::string::npos);
  }
}

TEST(Kde, NormalizedOnGrid) {
  Rng rng(5);
  const Vector c = rng.normal_vector(500);
  const Kde1d k(c, 0.3, Kde1d::uniform_grid(-6, 6, 801));
  EXPECT_NEAR(k.density().sum() * k.spacing(), 1.0, 1e-12);
  EXPECT_TRUE((k.density().array() >= 0.0).all());
}

TEST(Kde, SilvermanBandwidth) {
  Vector v(5);
  v << 1, 2, 3, 4, 5;
  EXPECT_NEAR(silverman_bandwidth(v), 1.06 * std::sqrt(2.5) * std::pow(5.0, -0.2), 1e-14);
}

TEST(SlicedTv, IdenticalInputsGiveZero) {
  Rng rng(6), dirs(7);
  const Matrix a = rng.normal_matrix(500, 3);
  EXPECT_LT(sliced_tv(a, a, dirs), 1e-12);
}

TEST(SlicedTv, SymmetricUnderSwapWithSameSeed) {
  Rng rng(8);
  const Matrix a = rng.normal_matrix(400, 2);
  const Matrix b = rng.normal_matrix(600, 2).array() + 0.5;
  Rng d1(9), d2(9);
  EXPECT_NEAR(sliced_tv(a, b, d1), sliced_tv(b, a, d2), 1e-12);
}

TEST(SlicedTv, SameLawNoiseFloor) {
  Rng rng(10), dirs(11);
  const Matrix a = rng.normal_matrix(10000, 1), b = rng.normal_matrix(10000, 1);
  EXPECT_LT(sliced_tv(a, b, dirs), 0.05);
}

TEST(SlicedTv, ShiftedNormalMatchesQuadrature) {
  Rng rng(12), dirs(13);
  const Matrix a = rng.normal_matrix(10000, 1);
  const Matrix b = rng.normal_matrix(10000, 1).array() + 4.0;
  const double exact = normal_tv_quadrature(0, 1, 4, 1);
  EXPECT_NEAR(exact, std::erf(2.0 / std::sqrt(2.0)), 1e-6);
  EXPECT_NEAR(sliced_tv(a, b, dirs), exact, 0.03);
}

TEST(SlicedTv, RejectsSmallOrDegenerateSamples) {
  Rng rng(14), dirs(15);
  EXPECT_THROW(sliced_tv(rng.normal_matrix(20, 2), rng.normal_matrix(100, 2), dirs), ArgumentError);
  EXPECT_THROW(sliced_tv(Matrix::Zero(100, 2), rng.normal_matrix(100, 2), dirs), ArgumentError);
}

TEST(KdeTvToDensity, NormalSamples) {
  Rng rng(16);
  const Vector s = rng.normal_vector(20000);
  EXPECT_LT(kde_tv_to_density(s, [](double x) { return -0.5 * x * x; }, -7, 7), 0.03);
  EXPECT_GT(kde_tv_to_density(s, [](double x) { return -0.5 * (x - 1) * (x - 1); }, -7, 8), 0.3);
}

TEST(Grid2dMetrics, ExactSamplesBelowNoiseFloor) {
  auto t = presets::mixture_2d_uneven();
  Rng rng(17);
  const TvKl r = kde_tv_and_kl(t->sample(10000, rng), *t);
  EXPECT_LE(r.tv, 0.1);
  EXPECT_GE(r.kl, -1e-9);
}

TEST(Grid2dMetrics, WrongWeightsAboveNoiseFloor) {
  auto uneven = presets::mixture_2d_uneven();
  auto equal = presets::mixture_2d_equal();
  Rng rng(18);
  const TvKl right = kde_tv_and_kl(uneven->sample(10000, rng), *uneven);
  const TvKl wrong = kde_tv_and_kl(equal->sample(10000, rng), *uneven);
  EXPECT_GT(wrong.tv, right.tv + 0.1);
  EXPECT_GT(wrong.kl, right.kl);
}

TEST(Grid2dMetrics, KlOfDistributionAgainstItself) {
  // KDE smoothing inflates the variance by h^2 ~ 0.04 here, which keeps KL near zero
  StdGaussianTarget t(2, 4.0);
  Rng rng(19);
  const Matrix s = t.sample(50000, rng);
  const TvKl r = kde_tv_and_kl(s, t);
  EXPECT_LT(r.kl, 5e-3);
  EXPECT_LT(r.tv, 0.03);
}

TEST(Grid2dMetrics, OnlyTwoDimensions) {
  StdGaussianTarget t(3);
  Rng rng(20);
  EXPECT_THROW(kde_tv_and_kl(t.sample(100, rng), t), CapabilityError);
}

TEST(Acceptance, Summaries) {
  EXPECT_THROW(acceptance_summary(std::vector<StepRecord>{}), ArgumentError);
  std::vector<StepRecord> all(10), half(10);
  for (int i = 0; i < 10; ++i) {
    all[i].accepted_global = true;
    all[i].mala_steps = 3;
    all[i].mala_accepts = 3;
    half[i].accepted_global = i % 2 == 0;
    half[i].mala_steps = 2;
    half[i].mala_accepts = 1;
  }
  const AcceptanceSummary a = acceptance_summary(all);
  EXPECT_EQ(a.global_move_rate, 1.0);
  EXPECT_EQ(a.mala_rate, 1.0);
  EXPECT_EQ(a.mala_steps, 30);
  const AcceptanceSummary h = acceptance_summary(half);
  EXPECT_EQ(h.global_move_rate, 0.5);
  EXPECT_EQ(h.mala_rate, 0.5);
}
