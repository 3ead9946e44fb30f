#include <gtest/gtest.h>

#include <set>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/rng.hpp"
#include "oracles.hpp"

using namespace ex2;

TEST(LogSumExp, MatchesDirectSumForModerateValues) {
  Vector v(4);
  v << 0.5, -1.0, 2.0, 0.0;
  double direct = 0.0;
  for (double x : v) direct += std::exp(x);
  EXPECT_NEAR(log_sum_exp(v), std::log(direct), 1e-14);
}

TEST(LogSumExp, SurvivesHugeMagnitudes) {
  Vector v(2);
  v << 1000.0, 1000.0;
  EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0), 1e-12);
  v << -1000.0, kNegInf;
  EXPECT_NEAR(log_sum_exp(v), -1000.0, 1e-12);
}

TEST(Softmax, SumsToOneAndIsShiftInvariantForExactShifts) {
  Vector v(5);
  v << 0.25, -3.5, 7.0, 1.125, -0.75;
  const Vector w = softmax(v);
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
  const Vector shifted = softmax((v.array() + 64.0).matrix());
  EXPECT_EQ((w - shifted).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Softmax, ArbitraryShiftWithinRounding) {
  Rng rng(3);
  const Vector v = rng.normal_vector(20) * 5.0;
  const Vector w = softmax(v);
  const Vector s = softmax((v.array() + 0.1234567).matrix());
  EXPECT_LT((w - s).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Softmax, AllNegativeInfinityThrows) {
  Vector v = Vector::Constant(3, kNegInf);
  EXPECT_THROW(softmax(v), KernelError);
}

TEST(RequireDim, ThrowsOnMismatch) {
  EXPECT_NO_THROW(require_dim(3, 3, "x"));
  EXPECT_THROW(require_dim(2, 3, "x"), ArgumentError);
}

TEST(Rng, SameSeedAndStreamReproduce) {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t s = 0; s < 64; ++s) firsts.insert(Rng(1, s).next_u64());
  EXPECT_EQ(firsts.size(), 64u);
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  Rng a(5), b(5);
  (void)a.split(3);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c1 = a.split(9), c2 = b.split(9);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(11);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1.0 - 1e-3);
}

TEST(Rng, NormalPassesKolmogorovSmirnov) {
  Rng r(12);
  std::vector<double> xs(50000);
  for (auto& x : xs) x = r.normal();
  EXPECT_LT(oracle::ks_statistic(xs, oracle::normal_cdf), oracle::ks_critical_001(xs.size()));
}

TEST(Rng, NormalMatrixFillsColumnMajor) {
  Rng a(13), b(13);
  const Matrix m = a.normal_matrix(3, 2);
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(m(i, j), b.normal());
}

TEST(Rng, StreamSeedIsPureFunction) {
  static_assert(stream_seed(1, 2) == stream_seed(1, 2));
  EXPECT_NE(stream_seed(1, 2), stream_seed(2, 1));
}
