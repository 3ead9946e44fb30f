#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ex2mcmc/core.hpp"

namespace ex2 {

/// A configuration violates a hypothesis of the bound being evaluated (e.g. a drift
/// coefficient that is not below one).
class InfeasibleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(-log(1 - exp(lx))) for lx < 0: the magnitude of log(1 - x) given log x.
inline double log_neg_log1m_exp(double lx) {
  if (lx < -30.0) return lx + 0.5 * std::exp(lx);  // -log(1-x) = x(1 + x/2 + ...)
  return std::log(-std::log1p(-std::exp(lx)));
}

}  // namespace detail

// -- special functions ---------------------------------------------------------------

/// log Phi(x) for the standard normal CDF. erfc covers the bulk; below -30 the Mills
/// ratio continued fraction keeps the result finite far past double underflow.
inline double log_normal_cdf(double x) {
  if (x >= 0.0) return std::log1p(-0.5 * std::erfc(x / std::sqrt(2.0)));
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
  // Phi(-t) = phi(t) / (t + 1/(t + 2/(t + 3/(t + ...)))), evaluated bottom-up
  const double t = -x;
  double cf = t;
  for (int k = 200; k >= 1; --k) cf = t + k / cf;
  return -0.5 * t * t - 0.5 * kLog2Pi - std::log(cf);
}

inline double normal_cdf(double x) { return std::exp(log_normal_cdf(x)); }

/// log Q(a, x), the regularized upper incomplete gamma function.
inline double log_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw ArgumentError("log_gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const double log_pref = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    const double p = std::exp(log_pref) * sum;
    return std::log1p(-p);
  }
  // modified Lentz on the continued fraction for Gamma(a, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return log_pref + std::log(h);
}

// -- i-SIR -------------------------------------------------------------------------------

struct IsirRate {
  int n_particles = 0;
  double weight_sup_ratio = 1.0;  // L
  double epsilon = 0.0;
  double kappa = 1.0;
};

/// eps_N = (N-1) / (2L + N - 2), kappa_N = 1 - eps_N.
inline IsirRate isir_rate(int n_particles, double weight_sup_ratio) {
  if (n_particles < 2) throw ArgumentError("isir_rate: N must be >= 2");
  if (!(weight_sup_ratio >= 1.0)) throw ArgumentError("isir_rate: L is a sup of normalized weights and must be >= 1");
  IsirRate r;
  r.n_particles = n_particles;
  r.weight_sup_ratio = weight_sup_ratio;
  const double n = n_particles;
  r.epsilon = (n - 1.0) / (2.0 * weight_sup_ratio + n - 2.0);
  r.kappa = 1.0 - r.epsilon;
  return r;
}

struct WeightSup {
  double value = 1.0;
  double log_value = 0.0;
  bool overflow = false;
};

/// L = ratio^d for product targets and proposals.
inline WeightSup product_weight_sup(double ratio_1d, int d) {
  if (!(ratio_1d >= 1.0)) throw ArgumentError("product_weight_sup: ratio must be >= 1");
  if (d < 1) throw ArgumentError("product_weight_sup: d must be >= 1");
  WeightSup w;
  w.log_value = d * std::log(ratio_1d);
  w.value = std::pow(ratio_1d, d);
  w.overflow = !std::isfinite(w.value);
  return w;
}

struct SmallSetEpsilon {
  double epsilon = 0.0;
  double limit = 0.0;  // N -> infinity
};

/// eps_{N,K} = (N-1) pi(K) / (2 w_{inf,K} + N - 2).
inline SmallSetEpsilon small_set_epsilon(long n_particles, double w_inf_k, double pi_k) {
  if (n_particles < 2) throw ArgumentError("small_set_epsilon: N must be >= 2");
  if (!(pi_k > 0.0 && pi_k <= 1.0)) throw ArgumentError("small_set_epsilon: pi(K) must lie in (0, 1]");
  if (!(w_inf_k >= 1.0)) throw ArgumentError("small_set_epsilon: w_inf must be >= 1");
  const double n = static_cast<double>(n_particles);
  return {(n - 1.0) * pi_k / (2.0 * w_inf_k + n - 2.0), pi_k};
}

struct IsirDrift {
  double b = 0.0;
  double limit = 0.0;
};

/// b_P = (N-1) pi(V) / (pi(V)/lambda(V) + (N-2)/2) + 4 (N-1) Var / ((N-2) lambda(V)),
/// Var = Var_lambda[w / lambda(w)]. Limit N -> infinity: 2 pi(V) + 4 Var / lambda(V).
inline IsirDrift isir_drift_b(long n_particles, double pi_v, double lambda_v, double var_w) {
  if (n_particles < 3) throw ArgumentError("isir_drift_b: the drift bound needs N >= 3");
  if (!(pi_v >= 1.0) || !(lambda_v >= 1.0)) throw ArgumentError("isir_drift_b: pi(V), lambda(V) must be >= 1 (V >= 1)");
  if (!(var_w >= 0.0)) throw ArgumentError("isir_drift_b: variance must be >= 0");
  const double n = static_cast<double>(n_particles);
  IsirDrift out;
  out.b = (n - 1.0) * pi_v / (pi_v / lambda_v + (n - 2.0) / 2.0) + 4.0 * (n - 1.0) * var_w / ((n - 2.0) * lambda_v);
  out.limit = 2.0 * pi_v + 4.0 * var_w / lambda_v;
  return out;
}

// -- composition of a drifting kernel with a small-set kernel ---------------------------------

struct CompositionRate {
  double lambda_q = 0.0;
  double b_p = 0.0;
  double b_q = 0.0;
  double eps_r = 0.0;
  double r = 1.0;
  // derived
  double b_k = 0.0;
  double lambda_bar = 0.0;
  double b_bar = 0.0;
  double log_rho = 0.0;
  double rho = 0.0;
  double c_k = 0.0;
};

/// rho_K with log rho_K = log(1-eps) log lbar / (log(1-eps) + log lbar - log bbar),
/// lbar = lambda_Q + 2 b_K/(1+r), bbar = lambda_Q r + b_K,
/// c_K = (lambda_Q + b_K)(1 + bbar / ((1-eps)(1-lbar))).
inline CompositionRate compose_rate(double lambda_q, double b_p, double b_q, double eps_r, double r) {
  if (!(lambda_q >= 0.0 && lambda_q < 1.0)) throw ArgumentError("compose_rate: lambda_Q must lie in [0, 1)");
  if (!(b_p >= 0.0) || !(b_q >= 0.0)) throw ArgumentError("compose_rate: drift constants must be >= 0");
  if (!(eps_r > 0.0 && eps_r <= 1.0)) throw ArgumentError("compose_rate: eps_r must lie in (0, 1]");
  if (!(r >= 1.0)) throw ArgumentError("compose_rate: r must be >= 1");
  CompositionRate c;
  c.lambda_q = lambda_q;
  c.b_p = b_p;
  c.b_q = b_q;
  c.eps_r = eps_r;
  c.r = r;
  c.b_k = b_p + b_q;
  c.lambda_bar = lambda_q + 2.0 * c.b_k / (1.0 + r);
  if (!(c.lambda_bar < 1.0))
    throw InfeasibleError("compose_rate: lambda_Q + 2 b_K/(1+r) = " + std::to_string(c.lambda_bar) + " is not below 1");
  c.b_bar = lambda_q * r + c.b_k;
  const double l = std::log(c.lambda_bar);
  if (eps_r == 1.0) {
    c.log_rho = l;  // limit of the expression as log(1-eps) -> -inf
  } else {
    const double a = std::log1p(-eps_r);
    c.log_rho = a * l / (a + l - std::log(c.b_bar));
  }
  c.rho = std::exp(c.log_rho);
  c.c_k = (lambda_q + c.b_k) * (1.0 + c.b_bar / ((1.0 - eps_r) * (1.0 - c.lambda_bar)));
  return c;
}

// -- MALA constants ----------------------------------------------------------------------------

/// Regularity constants of the potential U = -log pi: m (curvature at infinity),
/// M (Hessian regularity), L (gradient Lipschitz), K (radius beyond which curvature holds).
struct MalaInputs {
  double m = 0.1;
  double M = 2.0;
  double L = 1.0;
  double K = 5.0;
  int d = 2;
};

/// Every intermediate of the MALA ergodicity constants. Quantities that overflow or
/// underflow double precision are carried as logarithms (fields prefixed log_).
struct MalaConstants {
  MalaInputs in;
  double eta_bar = 0.0;
  double K_tilde = 0.0;
  double r_U = 0.0;
  double Gamma_half = 0.0;
  double C2_half = 0.0;
  double b_half = 0.0;
  double r_M = 0.0;
  double Gamma = 0.0;
  double varpi = 0.0;
  double log_lambda = 0.0;
  double lambda = 0.0;
  double lambda_bar = 0.0;
  double C1_Gamma = 0.0;
  double log_bU_Gamma = 0.0;
  double log_bM_Gamma = 0.0;
  double log_M_Gamma = 0.0;
  double K_Gamma = 0.0;
  double Gamma_tilde_half = 0.0;
  double C1_tilde = 0.0;
  double bU_tilde = 0.0;
  double log_eps_K_Gamma = 0.0;
  double log_Gamma_tilde_K_Gamma = 0.0;
  double log_Gamma_bar = 0.0;
  double Gamma_bar = 0.0;
  double log_bM_Gamma_bar = 0.0;
  double log_M_Gamma_bar = 0.0;
  double K_Gamma_bar = 0.0;
  double log_eps_K_Gamma_bar = 0.0;
  double log_bbar_M = 0.0;
  double log_abs_log_rho = 0.0;  // log |log rho_Gamma_bar|; rho itself rounds to 1 in double
  double log_rho = 0.0;
  double rho = 1.0;
  double log_C_Gamma_bar = 0.0;
};

namespace detail {

inline double mala_C1(const MalaInputs& p, double g) {
  const double L = p.L;
  const double inner = std::max({1.0, std::sqrt(g), g * L, std::pow(g * std::pow(L, 4.0 / 3.0), 1.5)});
  return 2.0 * std::max({std::sqrt(2.0) * p.M, std::sqrt(g) * p.M * L, 2.0 * L * L * inner});
}

inline double mala_C2(const MalaInputs& p, double g) {
  const double L = p.L, s2 = std::sqrt(2.0), c = std::pow(2.0, -1.5);
  const double brace = s2 * L * L + (s2 * L * L + c * std::sqrt(g)) * L * L * L;
  return 2.0 * L + 0.5 * g * L * L + c * std::pow(g, 1.5) * L * L * L + brace * brace * 16.0 / (p.m * p.m * p.m);
}

inline double log_eps_of_K(const MalaInputs& p, double K) {
  return std::log(2.0) + log_normal_cdf(-std::sqrt(3.0) * std::sqrt(p.L + 1.0) * K);
}

}  // namespace detail

/// log b^U at step bound g.
inline double mala_log_bU(const MalaConstants& c, double g) {
  const MalaInputs& p = c.in;
  const double e = c.eta_bar;
  const double A = e * (p.m / 4.0 + (1.0 + 16.0 * e * g) * (4.0 * e + 2.0 * p.L + g * p.L * p.L)) * c.r_U * c.r_U;
  const double base = A + 4.0 * e * p.d;
  return std::log(base) + g * base;
}

/// log b^M at step bound g.
inline double mala_log_bM(const MalaConstants& c, double g) {
  const MalaInputs& p = c.in;
  const double e = c.eta_bar;
  const double r2 = c.r_M * c.r_M;
  double acc = detail::log_add_exp(mala_log_bU(c, g), std::log(e * p.m * r2 / 16.0) + e * r2);
  if (g > 0.0) {
    const double d = p.d;
    acc = detail::log_add_exp(acc, std::log(detail::mala_C1(p, g) * std::sqrt(g) * (d + std::sqrt(3.0) * d * d + r2)));
  }
  return acc;
}

/// log M_g with M_g = max(4 b^M_g (1+g)/(1-lambda), 1).
inline double mala_log_M(const MalaConstants& c, double g) {
  return std::max(0.0, std::log(4.0) + mala_log_bM(c, g) + std::log1p(g) - std::log1p(-c.lambda));
}

inline MalaConstants mala_constants(const MalaInputs& in) {
  if (!(in.m > 0.0)) throw ArgumentError("mala_constants: m must be > 0");
  if (in.m > in.L) throw ArgumentError("mala_constants: m must not exceed L");
  if (!(in.M >= 0.0) || !(in.K >= 0.0)) throw ArgumentError("mala_constants: M, K must be >= 0");
  if (in.d < 1) throw ArgumentError("mala_constants: d must be >= 1");
  MalaConstants c;
  c.in = in;
  const double m = in.m, L = in.L, K = in.K, d = in.d;

  c.eta_bar = m / 16.0;
  c.K_tilde = 2.0 * K * (1.0 + L / m);
  c.r_U = std::max(c.K_tilde, 4.0 * std::sqrt(d / m));
  c.Gamma_half = std::min({1.0, m * m * m / (4.0 * L * L * L * L), 1.0 / d});
  c.C2_half = detail::mala_C2(in, c.Gamma_half);
  c.b_half = c.C2_half * d + 128.0 / std::exp(1.0);  // sup_{u>=1} u e^{-u/128} = 128/e
  c.r_M = std::max({16.0, 2.0 * K, c.r_U, c.K_tilde, 4.0 * std::sqrt(c.b_half) / std::sqrt(m * c.eta_bar)});
  c.Gamma = std::min(c.Gamma_half, 4.0 / (m * c.eta_bar * c.r_M * c.r_M));
  c.varpi = c.eta_bar * m * c.r_M * c.r_M / 16.0;
  c.log_lambda = -c.varpi;
  c.lambda = std::exp(-c.varpi);
  c.lambda_bar = 0.5 * (1.0 + c.lambda);

  c.C1_Gamma = detail::mala_C1(in, c.Gamma);
  c.log_bU_Gamma = mala_log_bU(c, c.Gamma);
  c.log_bM_Gamma = mala_log_bM(c, c.Gamma);
  c.log_M_Gamma = mala_log_M(c, c.Gamma);
  c.K_Gamma = std::sqrt(c.log_M_Gamma / c.eta_bar);

  // small-set step bound at radius K_Gamma
  c.Gamma_tilde_half = m / (4.0 * L * L);
  c.C1_tilde = detail::mala_C1(in, c.Gamma_tilde_half);
  const double rt = std::max(c.K_tilde, 2.0 * std::sqrt(2.0 * d / m));
  c.bU_tilde = 2.0 * d + rt * rt * (c.Gamma_tilde_half * L * L + 2.0 * L + m / 2.0);
  c.log_eps_K_Gamma = detail::log_eps_of_K(in, c.K_Gamma);
  const double denom = 2.0 * c.C1_tilde *
                       (d + std::sqrt(3.0) * d * d + c.K_Gamma * c.K_Gamma + 2.0 * c.bU_tilde / m);
  c.log_Gamma_tilde_K_Gamma = std::min(std::log(c.Gamma_tilde_half), 2.0 * (c.log_eps_K_Gamma - std::log(denom)));

  c.log_Gamma_bar = std::min(std::log(c.Gamma), c.log_Gamma_tilde_K_Gamma);
  c.Gamma_bar = std::exp(c.log_Gamma_bar);
  c.log_bM_Gamma_bar = mala_log_bM(c, c.Gamma_bar);
  c.log_M_Gamma_bar = mala_log_M(c, c.Gamma_bar);
  c.K_Gamma_bar = std::sqrt(c.log_M_Gamma_bar / c.eta_bar);
  c.log_eps_K_Gamma_bar = detail::log_eps_of_K(in, c.K_Gamma_bar);

  // rate and constant of the MALA bound
  c.log_bbar_M = detail::log_add_exp(c.log_lambda + c.log_bM_Gamma_bar, c.log_M_Gamma_bar);
  const double log_half_eps = c.log_eps_K_Gamma_bar - std::log(2.0);
  const double log_a = detail::log_neg_log1m_exp(log_half_eps);  // log |log(1 - eps/2)|
  const double a = std::exp(log_a);
  const double l = -std::log(c.lambda_bar);  // |log lambda_bar|
  c.log_abs_log_rho = log_a + std::log(l) - std::log(a + l + c.log_bbar_M);
  c.log_rho = -std::exp(c.log_abs_log_rho);
  c.rho = std::exp(c.log_rho);
  const double log_1m_half_eps = -a;
  const double inner = c.log_bbar_M - log_1m_half_eps - std::log(1.0 - c.lambda_bar);
  c.log_C_Gamma_bar = -c.log_rho + std::log1p(c.lambda) + detail::log_add_exp(0.0, inner);
  return c;
}

/// Least-squares slope of log K_Gamma_bar(d) against log d.
inline double k_gamma_bar_loglog_slope(MalaInputs base, const std::vector<int>& dims) {
  if (dims.size() < 2) throw ArgumentError("k_gamma_bar_loglog_slope: need at least two dimensions");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(dims.size());
  for (int d : dims) {
    base.d = d;
    const double x = std::log(static_cast<double>(d));
    const double y = std::log(mala_constants(base).K_Gamma_bar);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// -- Ex2MCMC with MALA rejuvenation ---------------------------------------------------------------

/// Level sets {V <= r} of V = exp(eta |x|^2) are balls; r itself overflows for the
/// constants of interest, so target-specific quantities are supplied as functions of the
/// ball radius sqrt(log r / eta).
struct LevelSetFunctions {
  std::function<double(double)> log_w_inf;    // radius -> log sup_{ball} w / lambda(w)
  std::function<double(double)> log_pi_tail;  // radius -> log(1 - pi(ball))
};

struct Ex2MalaRate {
  long n_particles = 0;  // 0 for the N -> infinity limit
  double log_r = 0.0;
  double radius = 0.0;
  double epsilon = 0.0;
  double log_one_minus_eps = 0.0;
  double log_b = 0.0;
  double log_bbar = 0.0;
  double lambda_bar = 0.0;
  double log_rho = 0.0;
  double rho = 0.0;
  double log_c_factor2 = 0.0;  // c with 2(1-eps)(1-lbar) in the denominator
  double log_c_factor1 = 0.0;  // c with (1-eps)(1-lbar)
};

namespace detail {

inline Ex2MalaRate finish_ex2_rate(const MalaConstants& mala, Ex2MalaRate out) {
  out.lambda_bar = mala.lambda_bar;
  const double ll = std::log(mala.lambda_bar);
  out.log_bbar = log_add_exp(mala.log_lambda + out.log_r, out.log_b);
  const double a = out.log_one_minus_eps;
  if (a == kNegInf) {
    out.log_rho = ll;
  } else {
    out.log_rho = a * ll / (a + ll - out.log_bbar);
  }
  out.rho = std::exp(out.log_rho);
  const double lead = log_add_exp(mala.log_lambda, out.log_bbar);
  const double q = out.log_bbar - a - std::log(1.0 - mala.lambda_bar);
  out.log_c_factor2 = lead + log_add_exp(0.0, q - std::log(2.0));
  out.log_c_factor1 = lead + log_add_exp(0.0, q);
  return out;
}

inline void set_level(const MalaConstants& mala, double log_b, Ex2MalaRate& out) {
  out.log_b = log_b;
  // r = 1 v {4 b / (1 - lambda) - 1}
  const double log_4b = std::log(4.0) + log_b - std::log1p(-mala.lambda);
  out.log_r = log_4b > 30.0 ? log_4b : std::log(std::max(1.0, std::exp(log_4b) - 1.0));
  out.radius = std::sqrt(out.log_r / mala.eta_bar);
}

}  // namespace detail

/// Rate of Ex2MCMC with the MALA kernel iterated ceil(1/gamma) times as rejuvenation.
/// isir_b is the i-SIR drift constant b_P for this N.
inline Ex2MalaRate ex2_mala_rate(long n_particles, const LevelSetFunctions& fns, const MalaConstants& mala,
                                 double isir_b) {
  if (n_particles < 2) throw ArgumentError("ex2_mala_rate: N must be >= 2");
  if (!(isir_b >= 0.0)) throw ArgumentError("ex2_mala_rate: b_P must be >= 0");
  Ex2MalaRate out;
  out.n_particles = n_particles;
  detail::set_level(mala, detail::log_add_exp(std::log(isir_b), mala.log_bbar_M), out);
  const double n = static_cast<double>(n_particles);
  const double log_tail = fns.log_pi_tail(out.radius);
  const double log_pi = std::log1p(-std::exp(log_tail));
  const double log_eps =
      std::log(n - 1.0) + log_pi - detail::log_add_exp(std::log(2.0) + fns.log_w_inf(out.radius), std::log(n - 2.0));
  out.epsilon = std::exp(log_eps);
  out.log_one_minus_eps = log_eps < 0.0 ? -std::exp(detail::log_neg_log1m_exp(log_eps)) : kNegInf;
  return detail::finish_ex2_rate(mala, out);
}

/// N -> infinity: eps = pi(V_r), b = b_P(infinity) + bbar^M.
inline Ex2MalaRate ex2_mala_rate_limit(const LevelSetFunctions& fns, const MalaConstants& mala, double isir_b_limit) {
  if (!(isir_b_limit >= 0.0)) throw ArgumentError("ex2_mala_rate_limit: b_P must be >= 0");
  Ex2MalaRate out;
  detail::set_level(mala, detail::log_add_exp(std::log(isir_b_limit), mala.log_bbar_M), out);
  const double log_tail = fns.log_pi_tail(out.radius);
  out.log_one_minus_eps = log_tail;
  out.epsilon = -std::expm1(log_tail);
  return detail::finish_ex2_rate(mala, out);
}

/// log of lim_N log(rho_MALA) / log(rho_N), i.e.
///   [log(1 - eps(K)/2) / log(1 - eps_inf)] * [(log(1-eps(K)/2) + log lbar - log bbar^M)
///                                             / (log(1-eps_inf) + log lbar - log bbar_inf)].
/// Inputs: log(eps(K)/2), log bbar^M, log(1 - eps_inf), log bbar_inf, lbar.
inline double log_mixing_ratio(double log_half_eps, double log_bbar_m, double log_one_minus_eps_inf,
                               double log_bbar_inf, double lambda_bar) {
  const double log_a = detail::log_neg_log1m_exp(log_half_eps);
  const double a = std::exp(log_a);
  const double c = -log_one_minus_eps_inf;
  if (!(c > 0.0)) throw ArgumentError("log_mixing_ratio: eps_inf must be positive");
  const double l = -std::log(lambda_bar);
  return log_a - std::log(c) + std::log(a + l + log_bbar_m) - std::log(c + l + log_bbar_inf);
}

inline double log_mixing_ratio_limit(const MalaConstants& mala, const Ex2MalaRate& limit) {
  return log_mixing_ratio(mala.log_eps_K_Gamma_bar - std::log(2.0), mala.log_bbar_M, limit.log_one_minus_eps,
                          limit.log_bbar, mala.lambda_bar);
}

// -- closed forms for Gaussian target / Gaussian proposal pairs ------------------------------------

/// pi = N(0, var_pi I_d), lambda = N(0, var_lambda I_d), V = exp(eta |x|^2).
struct GaussianPair {
  int d = 1;
  double var_pi = 1.0;
  double var_lambda = 2.0;

  /// pi(V); needs 2 eta var_pi < 1.
  double pi_V(double eta) const {
    if (!(2.0 * eta * var_pi < 1.0)) throw InfeasibleError("GaussianPair: pi(V) is infinite");
    return std::pow(1.0 - 2.0 * eta * var_pi, -0.5 * d);
  }
  double lambda_V(double eta) const {
    if (!(2.0 * eta * var_lambda < 1.0)) throw InfeasibleError("GaussianPair: lambda(V) is infinite");
    return std::pow(1.0 - 2.0 * eta * var_lambda, -0.5 * d);
  }
  /// Var_lambda[w / lambda(w)] = int pi^2 / lambda - 1.
  double weight_variance() const {
    const double c = 1.0 / var_pi - 0.5 / var_lambda;
    if (!(c > 0.0)) throw InfeasibleError("GaussianPair: weight variance is infinite");
    const double per_dim = std::sqrt(var_lambda) / (var_pi * std::sqrt(2.0 * c));
    return std::pow(per_dim, d) - 1.0;
  }
  /// log sup over the ball of pi(x)/lambda(x).
  double log_w_inf(double radius) const {
    const double k = 0.5 * (1.0 / var_pi - 1.0 / var_lambda);
    const double at0 = 0.5 * d * std::log(var_lambda / var_pi);
    return k >= 0.0 ? at0 : at0 - k * radius * radius;
  }
  /// log pi(|x| > radius) = log Q(d/2, radius^2 / (2 var_pi)).
  double log_pi_tail(double radius) const { return log_gamma_q(0.5 * d, 0.5 * radius * radius / var_pi); }

  LevelSetFunctions level_set_functions() const {
    GaussianPair self = *this;
    return {[self](double r) { return self.log_w_inf(r); }, [self](double r) { return self.log_pi_tail(r); }};
  }
};

// -- JSON report ----------------------------------------------------------------------------------

inline nlohmann::json to_json(const MalaConstants& c) {
  nlohmann::json j;
  j["inputs"] = {{"m", c.in.m}, {"M", c.in.M}, {"L", c.in.L}, {"K", c.in.K}, {"d", c.in.d}};
  j["eta_bar"] = c.eta_bar;
  j["K_tilde"] = c.K_tilde;
  j["r_U"] = c.r_U;
  j["Gamma_half"] = c.Gamma_half;
  j["C2_Gamma_half"] = c.C2_half;
  j["b_half"] = c.b_half;
  j["r_M"] = c.r_M;
  j["Gamma"] = c.Gamma;
  j["varpi"] = c.varpi;
  j["log_lambda"] = c.log_lambda;
  j["lambda"] = c.lambda;
  j["lambda_bar"] = c.lambda_bar;
  j["C1_Gamma"] = c.C1_Gamma;
  j["log_bU_Gamma"] = c.log_bU_Gamma;
  j["log_bM_Gamma"] = c.log_bM_Gamma;
  j["log_M_Gamma"] = c.log_M_Gamma;
  j["K_Gamma"] = c.K_Gamma;
  j["Gamma_tilde_half"] = c.Gamma_tilde_half;
  j["C1_Gamma_tilde_half"] = c.C1_tilde;
  j["bU_tilde"] = c.bU_tilde;
  j["log_eps_K_Gamma"] = c.log_eps_K_Gamma;
  j["log_Gamma_tilde_K_Gamma"] = c.log_Gamma_tilde_K_Gamma;
  j["log_Gamma_bar"] = c.log_Gamma_bar;
  j["Gamma_bar"] = c.Gamma_bar;
  j["log_bM_Gamma_bar"] = c.log_bM_Gamma_bar;
  j["log_M_Gamma_bar"] = c.log_M_Gamma_bar;
  j["K_Gamma_bar"] = c.K_Gamma_bar;
  j["log_eps_K_Gamma_bar"] = c.log_eps_K_Gamma_bar;
  j["log_bbar_M"] = c.log_bbar_M;
  j["log_abs_log_rho"] = c.log_abs_log_rho;
  j["log_rho"] = c.log_rho;
  j["rho"] = c.rho;
  j["log_C_Gamma_bar"] = c.log_C_Gamma_bar;
  return j;
}

inline nlohmann::json to_json(const Ex2MalaRate& r) {
  return {{"n_particles", r.n_particles}, {"log_r", r.log_r},     {"radius", r.radius},
          {"epsilon", r.epsilon},         {"log_one_minus_eps", r.log_one_minus_eps},
          {"log_b", r.log_b},             {"log_bbar", r.log_bbar}, {"lambda_bar", r.lambda_bar},
          {"log_rho", r.log_rho},         {"rho", r.rho},         {"log_c_factor2", r.log_c_factor2},
          {"log_c_factor1", r.log_c_factor1}};
}

inline nlohmann::json to_json(const IsirRate& r) {
  return {{"n_particles", r.n_particles}, {"L", r.weight_sup_ratio}, {"epsilon", r.epsilon}, {"kappa", r.kappa}};
}

/// Full report: MALA constants at the requested d, the K_Gamma_bar dimension scan with its
/// log-log slope, and (when a Gaussian pair is given) the Ex2MCMC rates and mixing-ratio limit.
struct TheoryRequest {
  MalaInputs mala;
  std::vector<int> dims;  // empty: 2..100
  int isir_n = 10;
  double isir_L = std::sqrt(2.0);
  std::vector<long> ex2_n = {10, 100, 1000};
  GaussianPair pair{2, 1.0, 2.0};
};

inline nlohmann::json theory_report(const TheoryRequest& req) {
  nlohmann::json j;
  const MalaConstants base = mala_constants(req.mala);
  j["mala"] = to_json(base);
  std::vector<int> dims = req.dims;
  if (dims.empty())
    for (int d = 2; d <= 100; ++d) dims.push_back(d);
  nlohmann::json scan = nlohmann::json::array();
  MalaInputs in = req.mala;
  const double k2 = [&] {
    MalaInputs t = req.mala;
    t.d = dims.front();
    return mala_constants(t).K_Gamma_bar;
  }();
  for (int d : dims) {
    in.d = d;
    const MalaConstants c = mala_constants(in);
    scan.push_back({{"d", d}, {"K_Gamma_bar", c.K_Gamma_bar}, {"ratio", c.K_Gamma_bar / k2}});
  }
  j["K_Gamma_bar_scan"] = scan;
  j["K_Gamma_bar_loglog_slope"] = k_gamma_bar_loglog_slope(req.mala, dims);
  j["isir"] = to_json(isir_rate(req.isir_n, req.isir_L));

  GaussianPair pair = req.pair;
  pair.d = req.mala.d;
  const double eta = base.eta_bar;
  nlohmann::json ex2 = nlohmann::json::array();
  const auto fns = pair.level_set_functions();
  const double pv = pair.pi_V(eta), lv = pair.lambda_V(eta), var = pair.weight_variance();
  for (long n : req.ex2_n) {
    if (n < 3) continue;
    ex2.push_back(to_json(ex2_mala_rate(n, fns, base, isir_drift_b(n, pv, lv, var).b)));
  }
  const Ex2MalaRate lim = ex2_mala_rate_limit(fns, base, isir_drift_b(3, pv, lv, var).limit);
  j["gaussian_pair"] = {{"var_pi", pair.var_pi}, {"var_lambda", pair.var_lambda}, {"d", pair.d}};
  j["ex2mcmc_rates"] = ex2;
  j["ex2mcmc_limit"] = to_json(lim);
  j["log_mixing_ratio_limit"] = log_mixing_ratio_limit(base, lim);
  return j;
}

}  // namespace ex2
