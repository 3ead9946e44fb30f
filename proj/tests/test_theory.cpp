#include <gtest/gtest.h>

#include "ex2mcmc/theory.hpp"

using namespace ex2;

namespace {

MalaInputs paper_inputs(int d = 2) { return MalaInputs{0.1, 2.0, 1.0, 5.0, d}; }

}  // namespace

// -- i-SIR -------------------------------------------------------------------------------

TEST(IsirRate, PerfectProposalWithTwoParticles) {
  const IsirRate r = isir_rate(2, 1.0);
  EXPECT_DOUBLE_EQ(r.epsilon, 0.5);
  EXPECT_DOUBLE_EQ(r.kappa, 0.5);
}

TEST(IsirRate, GaussianPairValue) {
  // L = sqrt 2 for N(0,1) against N(0,2)
  EXPECT_NEAR(isir_rate(10, std::sqrt(2.0)).epsilon, 9.0 / (2.0 * std::sqrt(2.0) + 8.0), 1e-15);
}

TEST(IsirRate, MonotoneInNAndL) {
  double prev_n = 0.0;
  for (int n : {2, 3, 5, 10, 100, 1000, 100000}) {
    const double e = isir_rate(n, 1.0).epsilon;
    EXPECT_GT(e, prev_n);
    EXPECT_LE(e, 1.0);
    prev_n = e;
  }
  EXPECT_NEAR(prev_n, 1.0, 1e-4);
  double prev_l = 2.0;
  for (double l : {1.0, 1.5, 3.0, 10.0, 1e3}) {
    const double e = isir_rate(10, l).epsilon;
    EXPECT_LT(e, prev_l);
    prev_l = e;
  }
}

TEST(IsirRate, RejectsSubunitL) {
  EXPECT_THROW(isir_rate(10, 0.9), ArgumentError);
  EXPECT_THROW(isir_rate(1, 1.0), ArgumentError);
}

TEST(WeightSup, ProductForm) {
  EXPECT_EQ(product_weight_sup(1.0, 57).value, 1.0);
  EXPECT_NEAR(product_weight_sup(std::sqrt(2.0), 2).value, 2.0, 1e-15);
  const WeightSup w = product_weight_sup(1.1, 300);
  const long double oracle = std::exp(300.0L * std::log(1.1L));
  EXPECT_NEAR(w.value / static_cast<double>(oracle), 1.0, 1e-12);
  EXPECT_NEAR(w.value, 2.6e12, 0.05e12);
  EXPECT_FALSE(w.overflow);
  const WeightSup big = product_weight_sup(10.0, 400);
  EXPECT_TRUE(big.overflow);
  EXPECT_NEAR(big.log_value, 400.0 * std::log(10.0), 1e-10);
}

TEST(SmallSet, Values) {
  EXPECT_DOUBLE_EQ(small_set_epsilon(2, 1.0, 1.0).epsilon, 0.5);
  const SmallSetEpsilon s = small_set_epsilon(100, 10.0, 0.9);
  EXPECT_NEAR(s.epsilon, 89.1 / 118.0, 1e-15);
  EXPECT_EQ(s.limit, 0.9);
  EXPECT_NEAR(small_set_epsilon(100000000, 10.0, 0.9).epsilon, 0.9, 1e-6);
}

TEST(IsirDriftConstant, HandValueAtThreeParticles) {
  // (N-1) pi / (pi/lambda + (N-2)/2) + 4 (N-1) Var / ((N-2) lambda) = 2*2/1.5 + 4*2/2
  const IsirDrift b = isir_drift_b(3, 2.0, 2.0, 1.0);
  EXPECT_NEAR(b.b, 20.0 / 3.0, 1e-14);
  EXPECT_NEAR(b.limit, 6.0, 1e-15);
}

TEST(IsirDriftConstant, ConvergesToLimit) {
  const IsirDrift b = isir_drift_b(1000000, 3.0, 5.0, 0.7);
  EXPECT_NEAR(b.limit, 2 * 3.0 + 4 * 0.7 / 5.0, 1e-15);
  EXPECT_NEAR(b.b, b.limit, 1e-3 * b.limit);
}

TEST(IsirDriftConstant, MonotoneDecreaseWhenTargetMomentIsSmall) {
  // with pi(V) / lambda(V) <= 1/2 both terms are nonincreasing in N
  double prev = std::numeric_limits<double>::infinity();
  for (long n = 3; n <= 10000; n = n < 20 ? n + 1 : n * 2) {
    const double b = isir_drift_b(n, 1.0, 4.0, 0.5).b;
    EXPECT_LT(b, prev) << "N=" << n;
    prev = b;
  }
  EXPECT_GT(prev, isir_drift_b(3, 1.0, 4.0, 0.5).limit);
}

TEST(IsirDriftConstant, NeedsThreeParticles) { EXPECT_THROW(isir_drift_b(2, 2.0, 2.0, 1.0), ArgumentError); }

// -- composition ---------------------------------------------------------------------------

TEST(Composition, AnchorPoint) {
  const CompositionRate c = compose_rate(0.5, 0.5, 0.5, 0.5, 20.0);
  const double lbar = 0.5 + 2.0 / 21.0;
  const double bbar = 0.5 * 20.0 + 1.0;
  const double rho = std::pow(lbar, std::log(0.5) / (std::log(0.5) + std::log(lbar) - std::log(bbar)));
  EXPECT_NEAR(c.lambda_bar, lbar, 1e-15);
  EXPECT_NEAR(c.b_bar, bbar, 1e-15);
  EXPECT_NEAR(c.rho, rho, 1e-14);
  EXPECT_NEAR(c.c_k, 1.5 * (1.0 + bbar / (0.5 * (1.0 - lbar))), 1e-12);
  EXPECT_GT(c.rho, 0.0);
  EXPECT_LT(c.rho, 1.0);
}

TEST(Composition, NonincreasingInEpsilon) {
  double prev = 1.0;
  for (double e = 0.05; e <= 1.0 + 1e-12; e += 0.05) {
    const double rho = compose_rate(0.3, 0.4, 0.2, std::min(e, 1.0), 10.0).rho;
    EXPECT_LE(rho, prev);
    prev = rho;
  }
}

TEST(Composition, BoundaryAndInfeasibleInputs) {
  EXPECT_THROW(compose_rate(0.5, 0.5, 0.5, 0.0, 20.0), ArgumentError);
  EXPECT_THROW(compose_rate(0.9, 1.0, 0.0, 0.5, 2.0), InfeasibleError);
}

// -- special functions ---------------------------------------------------------------------

TEST(SpecialFunctions, LogNormalCdfAgainstErfcAndAsymptotics) {
  for (double x : {-25.0, -5.0, -1.0, 0.0, 0.3, 4.0}) {
    EXPECT_NEAR(log_normal_cdf(x), std::log(0.5 * std::erfc(-x / std::sqrt(2.0))), 1e-12 * std::max(1.0, x * x));
  }
  // Mills-ratio asymptotic series, 4 terms, relative error ~ 105 / t^8
  for (double t : {40.0, 100.0, 1e4}) {
    const double series = std::log(1.0 - 1.0 / (t * t) + 3.0 / std::pow(t, 4) - 15.0 / std::pow(t, 6));
    const double ref = -0.5 * t * t - 0.5 * std::log(2.0 * M_PI) - std::log(t) + series;
    EXPECT_NEAR(log_normal_cdf(-t), ref, 1e-10 * std::abs(ref));
  }
  // continuity across the branch switch
  EXPECT_NEAR(log_normal_cdf(-30.0 + 1e-9), log_normal_cdf(-30.0 - 1e-9), 1e-6);
}

TEST(SpecialFunctions, UpperIncompleteGammaClosedForms) {
  for (double x : {0.01, 0.5, 2.0, 10.0, 300.0}) {
    EXPECT_NEAR(log_gamma_q(1.0, x), -x, 1e-12 * std::max(1.0, x));
    const double sx = std::sqrt(x);
    if (x < 100) {
      EXPECT_NEAR(log_gamma_q(0.5, x), std::log(std::erfc(sx)), 1e-10);
      EXPECT_NEAR(log_gamma_q(1.5, x), std::log(std::erfc(sx) + 2.0 * std::sqrt(x / M_PI) * std::exp(-x)), 1e-10);
    }
  }
  EXPECT_EQ(log_gamma_q(2.0, 0.0), 0.0);
}

// -- MALA constants -------------------------------------------------------------------------

TEST(MalaConstants, EtaBarIsMOverSixteen) { EXPECT_EQ(mala_constants(paper_inputs()).eta_bar, 0.1 / 16.0); }

TEST(MalaConstants, RejectsCurvatureAboveLipschitz) {
  MalaInputs in = paper_inputs();
  in.m = 1.5;
  EXPECT_THROW(mala_constants(in), ArgumentError);
}

TEST(MalaConstants, DerivedQuantitiesFiniteAndOrdered) {
  // Gamma_bar, lambda and 1 - rho underflow double at these constants; their logs do not
  const MalaConstants c = mala_constants(paper_inputs());
  EXPECT_TRUE(std::isfinite(c.log_Gamma_bar));
  EXPECT_LE(c.log_Gamma_bar, std::log(c.Gamma));
  EXPECT_EQ(c.log_lambda, -c.varpi);
  EXPECT_GE(c.lambda_bar, 0.5);
  EXPECT_LT(c.lambda_bar, 1.0);
  EXPECT_TRUE(std::isfinite(c.log_abs_log_rho));
  EXPECT_LE(c.log_rho, 0.0);
  EXPECT_TRUE(std::isfinite(c.log_C_Gamma_bar));
  EXPECT_GT(c.K_Gamma_bar, 0.0);
}

TEST(MalaConstants, KGammaBarGrowsLikeRootDimension) {
  std::vector<int> dims;
  for (int d = 2; d <= 100; ++d) dims.push_back(d);
  EXPECT_NEAR(k_gamma_bar_loglog_slope(paper_inputs(), dims), 0.5, 0.1);
}

TEST(MalaConstants, PinnedRegression) {
  const MalaConstants c = mala_constants(paper_inputs());
  EXPECT_NEAR(c.K_Gamma_bar, 81122.383269702128, 1e-6);
}

TEST(MalaConstants, PureAndDeterministic) {
  const nlohmann::json a = to_json(mala_constants(paper_inputs(7)));
  const nlohmann::json b = to_json(mala_constants(paper_inputs(7)));
  EXPECT_EQ(a.dump(), b.dump());
}

// -- Ex2MCMC rates ---------------------------------------------------------------------------

TEST(Ex2Rate, StrictlyImprovesWithParticles) {
  const MalaConstants mala = mala_constants(paper_inputs());
  const GaussianPair pair{2, 1.0, 2.0};
  const double eta = mala.eta_bar;
  double prev = 0.0;
  for (long n : {10L, 100L, 1000L, 10000L}) {
    const double b = isir_drift_b(n, pair.pi_V(eta), pair.lambda_V(eta), pair.weight_variance()).b;
    const Ex2MalaRate r = ex2_mala_rate(n, pair.level_set_functions(), mala, b);
    EXPECT_LT(r.log_rho, prev) << "N=" << n;
    prev = r.log_rho;
  }
}

TEST(Ex2Rate, LargeNApproachesLimit) {
  const MalaConstants mala = mala_constants(paper_inputs());
  const GaussianPair pair{2, 1.0, 2.0};
  const double eta = mala.eta_bar;
  const IsirDrift b = isir_drift_b(1000000000L, pair.pi_V(eta), pair.lambda_V(eta), pair.weight_variance());
  const Ex2MalaRate r = ex2_mala_rate(1000000000L, pair.level_set_functions(), mala, b.b);
  const Ex2MalaRate lim = ex2_mala_rate_limit(pair.level_set_functions(), mala, b.limit);
  // 1 - eps_N ~ 2 w / N, so eps converges but log(1 - eps) only logarithmically
  EXPECT_NEAR(r.epsilon, lim.epsilon, 1e-8);
  EXPECT_GT(r.log_rho, lim.log_rho);
}

TEST(MixingRatio, SymmetricInputsGiveOne) {
  const double log_half_eps = std::log(0.2);
  EXPECT_NEAR(log_mixing_ratio(log_half_eps, 3.0, std::log1p(-0.2), 3.0, 0.7), 0.0, 1e-14);
}

TEST(MixingRatio, DecaysWithDimension) {
  double prev = std::numeric_limits<double>::infinity();
  for (int d : {2, 5, 10, 20, 50, 100}) {
    TheoryRequest req;
    req.mala = paper_inputs(d);
    req.dims = {2, 3};
    const double v = theory_report(req)["log_mixing_ratio_limit"];
    EXPECT_LT(v, prev) << "d=" << d;
    prev = v;
  }
}

TEST(MixingRatio, PinnedRegression) {
  TheoryRequest req;
  req.mala = paper_inputs(2);
  req.dims = {2, 3};
  const double v = theory_report(req)["log_mixing_ratio_limit"];
  EXPECT_NEAR(v / -19742523241.496605, 1.0, 1e-9);
}
