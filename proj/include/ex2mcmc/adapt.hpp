#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/flow.hpp"
#include "ex2mcmc/kernels.hpp"
#include "ex2mcmc/proposals.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"

namespace ex2 {

/// gamma_k = gamma0 / (1 + k)^iota; alpha_k defaults to the constant alpha_inf.
struct AdaptSchedule {
  double gamma0 = 1e-2;
  double iota = 0.51;
  double alpha_inf = 0.9;
  std::function<double(long)> alpha_fn;  // optional nondecreasing override

  double gamma(long k) const { return gamma0 / std::pow(1.0 + static_cast<double>(k), iota); }
  double alpha(long k) const { return alpha_fn ? alpha_fn(k) : alpha_inf; }

  void validate() const {
    if (!(gamma0 >= 0.0)) throw ArgumentError("AdaptSchedule: gamma0 must be >= 0");
    if (!(iota > 0.5 && iota <= 1.0)) throw ArgumentError("AdaptSchedule: iota must lie in (1/2, 1]");
    if (!(alpha_inf >= 0.0 && alpha_inf <= 1.0)) throw ArgumentError("AdaptSchedule: alpha must lie in [0, 1]");
  }
};

enum class FlexOptimizer { Adam, Sgd };

struct FlexConfig {
  int n_chains = 64;
  IsirConfig isir{50, false};
  MalaConfig mala{0.05, 1};
  StepSizeAdaptation mala_adapt{true, 0.5, 0.05};  // shared step size, tuned while training
  FlexOptimizer optimizer = FlexOptimizer::Adam;
  double clip_norm = 100.0;
  double max_param_norm = 1e3;
};

struct FlexLogRow {
  long iteration = 0;
  double gamma = 0.0;
  double alpha = 0.0;
  double mean_log_weight_var = 0.0;
  double global_accept = 0.0;
  double mala_accept = 0.0;
  double grad_norm = 0.0;
  double backward_kl = 0.0;  // mean of log lambda(T z) - log pi~(T z) over the fresh draws
};

struct FlexState {
  Matrix chain_states;  // M x d, row j is chain j
  std::shared_ptr<RealNvpFlow> flow;
  AdamState adam;
  long k = 0;
  double mala_step = 0.05;
  std::vector<Rng> chain_rngs;
  std::vector<FlexLogRow> training_log;

  Eigen::Index n_chains() const { return chain_states.rows(); }
  std::shared_ptr<const RealNvpFlow> snapshot() const { return std::make_shared<const RealNvpFlow>(*flow); }
};

/// Chains start from draws of the current flow; chain j owns stream j + 1 of `seed`.
inline FlexState flex_init(const Target& target, std::shared_ptr<RealNvpFlow> flow, const FlexConfig& cfg,
                           std::uint64_t seed) {
  if (!flow) throw ArgumentError("flex_init: null flow");
  require_dim(flow->dim(), target.dim(), "flex_init");
  if (cfg.n_chains < 1) throw ArgumentError("flex_init: need at least one chain");
  FlexState s;
  s.flow = std::move(flow);
  s.adam = AdamState(s.flow->n_params());
  s.mala_step = cfg.mala.step_size;
  Rng init(seed, 0);
  s.chain_states = s.flow->forward(init.normal_matrix(target.dim(), cfg.n_chains)).first.transpose();
  for (int j = 0; j < cfg.n_chains; ++j) s.chain_rngs.emplace_back(seed, static_cast<std::uint64_t>(j) + 1);
  return s;
}

// -- gradient estimators -------------------------------------------------------------------

/// H^f = sum_l omega_l grad_theta log lambda_theta(x^l). Pool rows are candidates.
inline Vector h_forward(const RealNvpFlow& flow, const Target& target, const Matrix& pool, const Vector& log_weights) {
  require_dim(pool.cols(), target.dim(), "h_forward");
  require_dim(log_weights.size(), pool.rows(), "h_forward weights");
  return flow.grad_log_density_params(pool.transpose(), softmax(log_weights));
}

/// H^b = -(N-1)^{-1} sum_l grad_theta [log pi~(T z^l) + log|det J_T(z^l)|]. Rows are z^l.
inline Vector h_backward(const RealNvpFlow& flow, const Target& target, const Matrix& z_pool) {
  require_dim(z_pool.cols(), target.dim(), "h_backward");
  if (z_pool.rows() < 1) throw ArgumentError("h_backward: empty pool");
  const double w = -1.0 / static_cast<double>(z_pool.rows());
  return flow.grad_backward_terms(target, z_pool.transpose(), Vector::Constant(z_pool.rows(), w));
}

namespace detail {

inline void guard_update(const FlexState& s, const Vector& v, const char* what) {
  if (!v.allFinite()) {
    std::ostringstream msg;
    msg << "flex2_iteration: non-finite " << what << " at iteration " << s.k << " (|theta| = " << s.flow->params().norm()
        << ", mala step = " << s.mala_step << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace detail

/// One FlEx2MCMC iteration. Every chain takes an Ex2MCMC step under the frozen flow
/// theta_{k-1}; the pools of that step produce H^f and H^b; then
///   theta_k = theta_{k-1} + gamma_k M^{-1} sum_j [alpha_k H^f_j - (1 - alpha_k) H^b_j]
/// applied as Adam on the negated direction, or as the plain step with FlexOptimizer::Sgd.
/// `train = false` advances the chains only (theta frozen).
inline const FlexLogRow& flex2_iteration(FlexState& s, const Target& target, const FlexConfig& cfg,
                                         const AdaptSchedule& schedule, bool train = true) {
  schedule.validate();
  const RealNvpFlow& flow = *s.flow;
  const Eigen::Index d = target.dim();
  const Eigen::Index M = s.n_chains();
  const Eigen::Index N = cfg.isir.n_particles;
  if (N < 1) throw ArgumentError("flex2_iteration: n_particles must be >= 1");
  const Eigen::Index F = N - 1;

  // fresh draws, chain-major: chain j owns columns [j F, (j+1) F)
  Matrix z(d, M * F);
  for (Eigen::Index j = 0; j < M; ++j) z.middleCols(j * F, F) = s.chain_rngs[j].normal_matrix(d, F);
  Matrix x;
  Vector log_lambda_fresh;
  if (F > 0) {
    auto [xf, ld] = flow.forward(z);
    x = std::move(xf);
    log_lambda_fresh = RealNvpFlow::base_log_density(z) - ld;
  }
  const Matrix y = s.chain_states.transpose();
  const Vector log_lambda_y = flow.log_density(y);

  Matrix pools(d, M * N);  // chain j: column j N is its current state
  Vector lw(M * N);
  Vector omega(M * N);
  double lw_var = 0.0;
  long moves = 0;
  double bkl = 0.0;
  for (Eigen::Index j = 0; j < M; ++j) {
    pools.col(j * N) = y.col(j);
    if (F > 0) pools.middleCols(j * N + 1, F) = x.middleCols(j * F, F);
    Vector lam(N);
    lam[0] = log_lambda_y[j];
    if (F > 0) lam.tail(F) = log_lambda_fresh.segment(j * F, F);
    Vector lwj = pool_log_weights(target, pools.middleCols(j * N, N), lam);
    const Vector w = softmax(lwj);
    const Eigen::Index idx = categorical_index(w, s.chain_rngs[j].uniform());
    if (idx != 0) ++moves;
    s.chain_states.row(j) = pools.col(j * N + idx).transpose();
    lw.segment(j * N, N) = lwj;
    omega.segment(j * N, N) = w;
    if (F > 0) {
      const Vector fresh = lwj.tail(F);
      if (fresh.allFinite()) {
        lw_var += (fresh.array() - fresh.mean()).square().sum() / std::max<Eigen::Index>(F - 1, 1);
        bkl -= fresh.sum();  // log lambda - log pi~ = -log w
      }
    }
  }

  // local moves with the shared step size
  long acc = 0, tried = 0;
  for (Eigen::Index j = 0; j < M && cfg.mala.n_steps > 0; ++j) {
    LangevinPoint p = LangevinPoint::at(target, s.chain_states.row(j).transpose());
    for (int t = 0; t < cfg.mala.n_steps; ++t) acc += mala_step(p, target, s.mala_step, s.chain_rngs[j]) ? 1 : 0;
    tried += cfg.mala.n_steps;
    s.chain_states.row(j) = p.x.transpose();
  }
  if (tried > 0 && cfg.mala_adapt.enabled) {
    s.mala_step = adapt_step_size(s.mala_step, static_cast<double>(acc) / tried, cfg.mala_adapt.target_rate,
                                  cfg.mala_adapt.learning_rate);
  }

  FlexLogRow row;
  row.iteration = s.k;
  row.gamma = schedule.gamma(s.k);
  row.alpha = schedule.alpha(s.k);
  row.mean_log_weight_var = lw_var / static_cast<double>(M);
  row.global_accept = static_cast<double>(moves) / static_cast<double>(M);
  row.mala_accept = tried > 0 ? static_cast<double>(acc) / tried : 0.0;
  row.backward_kl = F > 0 ? bkl / static_cast<double>(M * F) : 0.0;

  if (train) {
    // M^{-1} sum_j H^f_j and M^{-1} sum_j H^b_j, each in one batched backward pass
    const Vector hf = flow.grad_log_density_params(pools, omega / static_cast<double>(M));
    Vector hb = Vector::Zero(flow.n_params());
    if (F > 0) hb = flow.grad_backward_terms(target, z, Vector::Constant(M * F, -1.0 / static_cast<double>(M * F)));
    Vector direction = row.alpha * hf - (1.0 - row.alpha) * hb;
    detail::guard_update(s, direction, "gradient");
    row.grad_norm = direction.norm();
    if (row.grad_norm > cfg.clip_norm) direction *= cfg.clip_norm / row.grad_norm;

    Vector theta = flow.params();
    if (cfg.optimizer == FlexOptimizer::Adam) {
      adam_update(theta, -direction, s.adam, row.gamma);
    } else {
      theta += row.gamma * direction;
    }
    const double norm = theta.norm();
    if (norm > cfg.max_param_norm) theta *= cfg.max_param_norm / norm;
    detail::guard_update(s, theta, "parameter update");
    s.flow->set_params(theta);
  }
  ++s.k;
  s.training_log.push_back(row);
  return s.training_log.back();
}

/// Norm of the Monte-Carlo estimate of alpha grad KL(pi || lambda) + (1-alpha) grad KL(lambda || pi)
/// at the current parameters: ground-truth draws for the first term, base draws for the second.
inline double stationarity_residual(const RealNvpFlow& flow, const Target& target, double alpha, long n_mc, Rng& rng) {
  if (!target.has_exact_sampler()) throw CapabilityError("stationarity_residual: target has no exact sampler");
  if (n_mc < 1) throw ArgumentError("stationarity_residual: n_mc must be >= 1");
  const double inv = 1.0 / static_cast<double>(n_mc);
  const Matrix xs = target.sample(n_mc, rng).transpose();
  const Vector fwd = -flow.grad_log_density_params(xs, Vector::Constant(n_mc, inv));
  const Matrix z = rng.normal_matrix(flow.dim(), n_mc);
  const Vector bwd = -flow.grad_backward_terms(target, z, Vector::Constant(n_mc, inv));
  return (alpha * fwd + (1.0 - alpha) * bwd).norm();
}

inline void write_training_log(const std::string& path, const std::vector<FlexLogRow>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_training_log: cannot open " + path);
  os << "iteration,gamma,alpha,mean_log_weight_var,global_accept,mala_accept,grad_norm,backward_kl\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.iteration << ',' << r.gamma << ',' << r.alpha << ',' << r.mean_log_weight_var << ',' << r.global_accept
       << ',' << r.mala_accept << ',' << r.grad_norm << ',' << r.backward_kl << '\n';
  }
}

}  // namespace ex2
