#include <gtest/gtest.h>

#include "ex2mcmc/proposals.hpp"
#include "ex2mcmc/targets.hpp"
#include "oracles.hpp"

using namespace ex2;

namespace {

std::shared_ptr<RealNvpFlow> random_flow(int dim, std::uint64_t seed) {
  Rng rng(seed);
  FlowConfig c;
  c.dim = dim;
  c.hidden = {8, 8};
  auto f = std::make_shared<RealNvpFlow>(c, rng);
  Vector th = f->params();
  for (Eigen::Index i = 0; i < th.size(); ++i) th[i] += 0.2 * rng.normal();
  f->set_params(th);
  return f;
}

}  // namespace

TEST(GaussianProposal, EmpiricalVarianceMatches) {
  IsotropicGaussianProposal p(Vector::Zero(3), 4.0);
  Rng rng(1);
  const ProposalBatch b = p.sample_batch(100000, rng);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double v = b.x.row(i).squaredNorm() / b.x.cols();
    EXPECT_NEAR(v, 4.0, 4.0 * 4.0 * std::sqrt(2.0 / b.x.cols()));
  }
}

TEST(GaussianProposal, MeanShiftedSampleMean) {
  Vector m(2);
  m << 3.0, -1.5;
  IsotropicGaussianProposal p(m, 1.0);
  Rng rng(2);
  const ProposalBatch b = p.sample_batch(100000, rng);
  const Vector mean = b.x.rowwise().mean();
  EXPECT_LT((mean - m).cwiseAbs().maxCoeff(), 4.0 / std::sqrt(100000.0));
}

TEST(GaussianProposal, LogDensityAtOrigin) {
  IsotropicGaussianProposal p(Vector::Zero(2), 1.0);
  EXPECT_NEAR(p.log_density(Vector::Zero(2)), -std::log(2.0 * M_PI), 1e-15);
}

TEST(GaussianProposal, BatchLogDensityMatchesBatchSample) {
  auto p = IsotropicGaussianProposal::centered(3, 2.0);
  Rng rng(3);
  const ProposalBatch b = p->sample_batch(10, rng);
  const Vector ld = p->log_density_batch(b.x);
  for (int j = 0; j < 10; ++j) {
    const Vector x = b.x.col(j);
    const double ref = -0.5 * x.squaredNorm() / 2.0 - 1.5 * std::log(2.0 * M_PI * 2.0);
    EXPECT_NEAR(ld[j], ref, 1e-13);
    EXPECT_NEAR(b.log_density[j], ref, 1e-13);
  }
}

TEST(GaussianProposal, RejectsNonPositiveVariance) {
  EXPECT_THROW(IsotropicGaussianProposal(Vector::Zero(2), 0.0), ArgumentError);
}

TEST(FlowProposal, IdentityFlowDrawsAreStandardNormal) {
  FlowConfig c;
  c.dim = 2;
  FlowProposal p(std::make_shared<RealNvpFlow>(c));
  Rng rng(4);
  const ProposalBatch b = p.sample_batch(20000, rng);
  std::vector<double> xs(b.x.cols());
  for (Eigen::Index j = 0; j < b.x.cols(); ++j) xs[j] = b.x(1, j);
  EXPECT_LT(oracle::ks_statistic(xs, oracle::normal_cdf), oracle::ks_critical_001(xs.size()));
  const Vector x = b.x.col(0);
  EXPECT_NEAR(p.log_density(x), -0.5 * x.squaredNorm() - std::log(2.0 * M_PI), 1e-14);
}

TEST(FlowProposal, LogDensityMatchesNumericalJacobian) {
  auto f = random_flow(3, 5);
  FlowProposal p(f);
  Rng rng(5);
  for (int k = 0; k < 5; ++k) {
    const Vector x = rng.normal_vector(3);
    const Matrix J = oracle::fd_jacobian([&](const Vector& v) { return f->inverse(v).first; }, x, 1e-6);
    const Vector z = f->inverse(x).first;
    const double ref = -0.5 * z.squaredNorm() - 1.5 * kLog2Pi + std::log(std::abs(J.determinant()));
    EXPECT_LT(std::abs(p.log_density(x) - ref), 1e-5 * std::max(1.0, std::abs(ref)));
  }
}

TEST(FlowProposal, BatchLogDensityConsistentWithSampling) {
  FlowProposal p(random_flow(4, 6));
  Rng rng(6);
  const ProposalBatch b = p.sample_batch(50, rng);
  EXPECT_LT((b.log_density - p.log_density_batch(b.x)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FlowProposal, ImportanceSelfCheckIntegratesToOne) {
  // E_phi[ lambda(T z) / (phi(z) e^{-logdet}) ] = 1 for the exact pushforward density
  auto f = random_flow(2, 7);
  Rng rng(7);
  const Matrix z = rng.normal_matrix(2, 100000);
  const auto [x, ld] = f->forward(z);
  const Vector log_phi = RealNvpFlow::base_log_density(z);
  const Vector log_lam = f->log_density(x);
  const double m = (log_lam - log_phi + ld).array().exp().mean();
  EXPECT_NEAR(m, 1.0, 1e-2);
}

TEST(ImportanceWeight, IdenticalDensitiesGiveConstantWeight) {
  StdGaussianTarget t(2, 3.0);
  IsotropicGaussianProposal p(Vector::Zero(2), 3.0);
  Rng rng(8);
  const double w0 = log_importance_weight(t, p, rng.normal_vector(2));
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(log_importance_weight(t, p, rng.normal_vector(2) * 3.0), w0, 1e-12);
}

TEST(ImportanceWeight, OneDimensionalClosedForm) {
  StdGaussianTarget t(1);
  IsotropicGaussianProposal p(Vector::Zero(1), 2.0);
  for (double x : {0.0, 0.7, -2.5}) {
    Vector v(1);
    v << x;
    EXPECT_NEAR(log_importance_weight(t, p, v), -x * x / 4.0 + 0.5 * std::log(4.0 * M_PI), 1e-13);
  }
}

TEST(ImportanceWeight, MixtureAtModeCenter) {
  auto t = presets::mixture_2d_uneven();
  IsotropicGaussianProposal p(Vector::Zero(2), 4.0);
  const Vector mu = t->centers()[0];
  double mix = 0.0;
  for (std::size_t k = 0; k < 3; ++k) mix += t->weights()[k] * std::exp(-0.5 * (mu - t->centers()[k]).squaredNorm());
  const double ref = std::log(mix) - (-0.5 * mu.squaredNorm() / 4.0 - std::log(2.0 * M_PI * 4.0));
  EXPECT_NEAR(log_importance_weight(*t, p, mu), ref, 1e-12);
}

TEST(ImportanceWeight, NonFiniteCarriesPoint) {
  IsotropicGaussianProposal p(Vector::Zero(1), 1e-300);
  StdGaussianTarget t(1);
  Vector x(1);
  x << 1e200;
  try {
    log_importance_weight(t, p, x);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(ImportanceWeight, DimensionMismatchThrows) {
  StdGaussianTarget t(2);
  IsotropicGaussianProposal p(Vector::Zero(3), 1.0);
  EXPECT_THROW(log_importance_weight(t, p, Vector::Zero(2)), ArgumentError);
}
