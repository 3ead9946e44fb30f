#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <utility>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/proposals.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"

namespace ex2 {

struct IsirConfig {
  int n_particles = 10;
  bool keep_pool = false;  // retain pool, base noise and log-weights in the StepRecord
};

struct MalaConfig {
  double step_size = 0.1;
  int n_steps = 1;
};

/// Outcome of one transition. `index` is the selected pool slot (0 = previous state).
struct StepRecord {
  Vector new_state;
  bool accepted_global = false;
  int mala_accepts = 0;
  int mala_steps = 0;
  Eigen::Index index = 0;
  // filled only when IsirConfig::keep_pool is set
  Matrix pool;  // d x N, column 0 is the previous state
  Matrix z_pool;  // d x (N-1), base noise behind columns 1..N-1
  Vector log_weights;
};

/// Smallest i with (w_0 + ... + w_i) > u * sum(w). Inverse-CDF draw with one uniform.
inline Eigen::Index categorical_index(const Vector& weights, double u) {
  if (weights.size() == 0) throw ArgumentError("categorical_index: empty weight vector");
  const double threshold = u * weights.sum();
  double cum = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (cum > threshold) return i;
  }
  // u*sum rounding up to the full sum: fall back to the last positive weight
  for (Eigen::Index i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

// -- i-SIR ----------------------------------------------------------------------

/// Log-weights of a pool whose column 0 is the current state. NaN densities count as
/// zero weight.
inline Vector pool_log_weights(const Target& target, const Matrix& pool, const Vector& log_lambda) {
  Vector lw(pool.cols());
  for (Eigen::Index j = 0; j < pool.cols(); ++j) {
    const double v = target.log_density(pool.col(j)) - log_lambda[j];
    lw[j] = std::isnan(v) ? kNegInf : v;
  }
  return lw;
}

inline StepRecord isir_step(const Vector& y, const Target& target, const Proposal& proposal,
                            const IsirConfig& cfg, Rng& rng) {
  require_dim(y.size(), target.dim(), "isir_step");
  require_dim(proposal.dim(), target.dim(), "isir_step proposal");
  if (cfg.n_particles < 1) throw ArgumentError("isir_step: n_particles must be >= 1");
  if (!y.allFinite()) throw KernelError("isir_step: current state is not finite");
  const Eigen::Index n = cfg.n_particles;
  const Eigen::Index d = y.size();

  Matrix pool(d, n);
  pool.col(0) = y;
  Vector log_lambda(n);
  log_lambda[0] = proposal.log_density(y);
  ProposalBatch fresh;
  if (n > 1) {
    fresh = proposal.sample_batch(n - 1, rng);
    pool.rightCols(n - 1) = fresh.x;
    log_lambda.tail(n - 1) = fresh.log_density;
  }
  Vector lw = pool_log_weights(target, pool, log_lambda);
  const Vector w = softmax(lw);
  const Eigen::Index idx = categorical_index(w, rng.uniform());

  StepRecord rec;
  rec.new_state = pool.col(idx);
  rec.index = idx;
  rec.accepted_global = idx != 0;
  if (cfg.keep_pool) {
    rec.pool = std::move(pool);
    rec.z_pool = n > 1 ? std::move(fresh.z) : Matrix(d, 0);
    rec.log_weights = std::move(lw);
  }
  return rec;
}

// -- MALA -------------------------------------------------------------------------

/// State plus cached log-density and gradient, so a chain pays one gradient per step.
struct LangevinPoint {
  Vector x;
  double log_density = 0.0;
  Vector grad;

  static LangevinPoint at(const Target& target, Vector x) {
    LangevinPoint p;
    p.log_density = target.log_density(x);
    p.grad = target.grad_log_density(x);
    p.x = std::move(x);
    return p;
  }
};

/// log of the MALA acceptance ratio for a move y -> y_new:
///   log pi(y_new) - log pi(y) - |y - y_new - g g(y_new)|^2/(4g) + |y_new - y - g g(y)|^2/(4g)
inline double mala_log_accept(const LangevinPoint& from, const LangevinPoint& to, double gamma) {
  const double fwd = (to.x - from.x - gamma * from.grad).squaredNorm();
  const double bwd = (from.x - to.x - gamma * to.grad).squaredNorm();
  return to.log_density - from.log_density - bwd / (4.0 * gamma) + fwd / (4.0 * gamma);
}

/// One MALA transition in place. Returns whether the proposal was accepted.
inline bool mala_step(LangevinPoint& p, const Target& target, double gamma, Rng& rng) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ArgumentError("mala_step: step size must be positive");
  if (!p.grad.allFinite() || !std::isfinite(p.log_density)) {
    std::ostringstream msg;
    msg << "mala_step: non-finite gradient or density at " << format_vector(p.x);
    throw KernelError(msg.str());
  }
  const Vector noise = rng.normal_vector(p.x.size());
  const double log_u = std::log(rng.uniform_open());
  LangevinPoint q;
  q.x = p.x + gamma * p.grad + std::sqrt(2.0 * gamma) * noise;
  q.log_density = target.log_density(q.x);
  if (!std::isfinite(q.log_density)) return false;
  q.grad = target.grad_log_density(q.x);
  if (!q.grad.allFinite()) return false;
  const double log_alpha = mala_log_accept(p, q, gamma);
  if (std::isnan(log_alpha) || !(log_u < log_alpha)) return false;
  p = std::move(q);
  return true;
}

inline std::pair<Vector, bool> mala_step(const Vector& y, const Target& target, double gamma, Rng& rng) {
  require_dim(y.size(), target.dim(), "mala_step");
  LangevinPoint p = LangevinPoint::at(target, y);
  const bool acc = mala_step(p, target, gamma, rng);
  return {std::move(p.x), acc};
}

// -- Ex2MCMC ------------------------------------------------------------------------

/// One i-SIR move followed by mala.n_steps MALA moves with a shared step size.
inline StepRecord ex2mcmc_step(const Vector& y, const Target& target, const Proposal& proposal,
                               const IsirConfig& isir, const MalaConfig& mala, Rng& rng) {
  if (mala.n_steps < 0) throw ArgumentError("ex2mcmc_step: n_steps must be >= 0");
  StepRecord rec = isir_step(y, target, proposal, isir, rng);
  if (mala.n_steps == 0) return rec;
  LangevinPoint p = LangevinPoint::at(target, std::move(rec.new_state));
  for (int s = 0; s < mala.n_steps; ++s) rec.mala_accepts += mala_step(p, target, mala.step_size, rng) ? 1 : 0;
  rec.mala_steps = mala.n_steps;
  rec.new_state = std::move(p.x);
  return rec;
}

// -- chains -----------------------------------------------------------------------------

struct ChainStats {
  long steps = 0;
  long global_moves = 0;
  long mala_accepts = 0;
  long mala_steps = 0;

  void add(const StepRecord& r) {
    ++steps;
    global_moves += r.accepted_global ? 1 : 0;
    mala_accepts += r.mala_accepts;
    mala_steps += r.mala_steps;
  }
  void merge(const ChainStats& o) {
    steps += o.steps;
    global_moves += o.global_moves;
    mala_accepts += o.mala_accepts;
    mala_steps += o.mala_steps;
  }
};

struct ChainResult {
  Matrix trajectory;  // rows are post-burn-in states
  ChainStats stats;   // post-burn-in steps only
};

/// step_fn(state, rng, in_burn_in) -> StepRecord
using StepFn = std::function<StepRecord(const Vector&, Rng&, bool)>;

inline ChainResult run_chain(const StepFn& step_fn, const Vector& y0, long n_steps, long burn_in, Rng& rng) {
  if (burn_in < 0 || n_steps <= burn_in) throw ArgumentError("run_chain: need 0 <= burn_in < n_steps");
  ChainResult out;
  out.trajectory.resize(n_steps - burn_in, y0.size());
  Vector y = y0;
  for (long k = 0; k < n_steps; ++k) {
    const bool warm = k < burn_in;
    StepRecord r = step_fn(y, rng, warm);
    require_dim(r.new_state.size(), y0.size(), "run_chain step output");
    y = std::move(r.new_state);
    if (!warm) {
      out.trajectory.row(k - burn_in) = y.transpose();
      out.stats.add(r);
    }
  }
  return out;
}

/// gamma' = gamma * exp(lr * (observed - target)).
inline double adapt_step_size(double gamma, double observed_rate, double target_rate, double learning_rate) {
  if (!(gamma > 0.0)) throw ArgumentError("adapt_step_size: gamma must be positive");
  if (observed_rate < 0.0 || observed_rate > 1.0 || target_rate < 0.0 || target_rate > 1.0)
    throw ArgumentError("adapt_step_size: rates must lie in [0, 1]");
  return gamma * std::exp(learning_rate * (observed_rate - target_rate));
}

struct StepSizeAdaptation {
  bool enabled = true;
  double target_rate = 0.5;
  double learning_rate = 0.05;
};

/// Ex2MCMC sampler with a per-chain MALA step size tuned during burn-in and frozen after.
/// With isir.n_particles = 1 it is plain MALA; with mala.n_steps = 0 plain i-SIR.
class Ex2Sampler {
 public:
  Ex2Sampler(TargetPtr target, ProposalPtr proposal, IsirConfig isir, MalaConfig mala,
             StepSizeAdaptation adapt = {})
      : target_(std::move(target)), proposal_(std::move(proposal)), isir_(isir), mala_(mala), adapt_(adapt) {
    if (!target_ || !proposal_) throw ArgumentError("Ex2Sampler: null target or proposal");
    require_dim(proposal_->dim(), target_->dim(), "Ex2Sampler proposal");
  }

  double step_size() const { return mala_.step_size; }
  const IsirConfig& isir_config() const { return isir_; }
  const MalaConfig& mala_config() const { return mala_; }

  StepRecord step(const Vector& y, Rng& rng, bool in_burn_in) {
    StepRecord r = ex2mcmc_step(y, *target_, *proposal_, isir_, mala_, rng);
    if (in_burn_in && adapt_.enabled && r.mala_steps > 0) {
      const double rate = static_cast<double>(r.mala_accepts) / r.mala_steps;
      mala_.step_size = adapt_step_size(mala_.step_size, rate, adapt_.target_rate, adapt_.learning_rate);
    }
    return r;
  }

  ChainResult run(const Vector& y0, long n_steps, long burn_in, Rng& rng) {
    return run_chain([this](const Vector& y, Rng& r, bool warm) { return step(y, r, warm); }, y0, n_steps,
                     burn_in, rng);
  }

 private:
  TargetPtr target_;
  ProposalPtr proposal_;
  IsirConfig isir_;
  MalaConfig mala_;
  StepSizeAdaptation adapt_;
};

// -- SNIS ---------------------------------------------------------------------------------

/// sum_i omega_i f(x_i), omega = softmax(log_weights). Pool rows are points.
inline double snis_estimate(const std::function<double(const Vector&)>& f, const Matrix& pool,
                            const Vector& log_weights) {
  require_dim(log_weights.size(), pool.rows(), "snis_estimate");
  if (pool.rows() < 1) throw ArgumentError("snis_estimate: empty pool");
  const Vector w = softmax(log_weights);
  double s = 0.0;
  for (Eigen::Index i = 0; i < pool.rows(); ++i)
    if (w[i] > 0.0) s += w[i] * f(pool.row(i).transpose());
  return s;
}

}  // namespace ex2
