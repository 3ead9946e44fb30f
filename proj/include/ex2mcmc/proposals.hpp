#pragma once

#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/flow.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"

namespace ex2 {

/// A batch of proposal draws stored column-wise. `z` holds the base-space noise that
/// produced each column of `x` (for a Gaussian proposal it is the standardized draw).
struct ProposalBatch {
  Matrix x;
  Matrix z;
  Vector log_density;
};

/// Independent proposal lambda with exact sampling and exact normalized log-density.
class Proposal {
 public:
  virtual ~Proposal() = default;

  virtual Eigen::Index dim() const = 0;
  virtual std::string name() const = 0;

  Vector sample(Rng& rng) const { return sample_batch(1, rng).x.col(0); }

  double log_density(const Vector& x) const {
    require_dim(x.size(), dim(), name() + "::log_density");
    return log_density_batch(Matrix(x))[0];
  }

  /// n draws, consuming the stream column by column.
  virtual ProposalBatch sample_batch(Eigen::Index n, Rng& rng) const = 0;

  /// log lambda at every column of x.
  virtual Vector log_density_batch(const Matrix& x) const = 0;
};

using ProposalPtr = std::shared_ptr<const Proposal>;

class IsotropicGaussianProposal final : public Proposal {
 public:
  IsotropicGaussianProposal(Vector mean, double variance) : mean_(std::move(mean)), var_(variance) {
    if (mean_.size() < 1) throw ArgumentError("IsotropicGaussianProposal: empty mean");
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw ArgumentError("IsotropicGaussianProposal: variance must be positive");
    sd_ = std::sqrt(var_);
    log_norm_ = -0.5 * static_cast<double>(mean_.size()) * (kLog2Pi + std::log(var_));
  }

  static std::shared_ptr<IsotropicGaussianProposal> centered(Eigen::Index dim, double variance) {
    return std::make_shared<IsotropicGaussianProposal>(Vector::Zero(dim), variance);
  }

  Eigen::Index dim() const override { return mean_.size(); }
  std::string name() const override { return "gaussian"; }
  const Vector& mean() const { return mean_; }
  double variance() const { return var_; }

  ProposalBatch sample_batch(Eigen::Index n, Rng& rng) const override {
    ProposalBatch b;
    b.z = rng.normal_matrix(dim(), n);
    b.x = (sd_ * b.z).colwise() + mean_;
    b.log_density = (log_norm_ - 0.5 * b.z.colwise().squaredNorm().array()).matrix().transpose();
    return b;
  }

  Vector log_density_batch(const Matrix& x) const override {
    require_dim(x.rows(), dim(), "gaussian::log_density");
    return (log_norm_ - 0.5 * (x.colwise() - mean_).colwise().squaredNorm().array() / var_)
        .matrix()
        .transpose();
  }

 private:
  Vector mean_;
  double var_;
  double sd_;
  double log_norm_;
};

/// Push-forward of the standard normal through a RealNVP flow. Holds the flow by
/// shared pointer; the adaptive sampler swaps in a new snapshot between epochs.
class FlowProposal final : public Proposal {
 public:
  explicit FlowProposal(std::shared_ptr<const RealNvpFlow> flow) : flow_(std::move(flow)) {
    if (!flow_) throw ArgumentError("FlowProposal: null flow");
  }

  Eigen::Index dim() const override { return flow_->dim(); }
  std::string name() const override { return "flow"; }
  const RealNvpFlow& flow() const { return *flow_; }
  std::shared_ptr<const RealNvpFlow> flow_ptr() const { return flow_; }

  ProposalBatch sample_batch(Eigen::Index n, Rng& rng) const override {
    ProposalBatch b;
    b.z = rng.normal_matrix(dim(), n);
    auto [x, ld] = flow_->forward(b.z);
    b.x = std::move(x);
    // log lambda(T(z)) = log phi(z) - log|det J_T(z)|
    b.log_density = RealNvpFlow::base_log_density(b.z) - ld;
    return b;
  }

  Vector log_density_batch(const Matrix& x) const override { return flow_->log_density(x); }

 private:
  std::shared_ptr<const RealNvpFlow> flow_;
};

/// log w(x) = log pi~(x) - log lambda(x).
inline double log_importance_weight(const Target& target, const Proposal& proposal, const Vector& x) {
  require_dim(x.size(), target.dim(), "log_importance_weight");
  require_dim(proposal.dim(), target.dim(), "log_importance_weight proposal");
  const double lw = target.log_density(x) - proposal.log_density(x);
  if (!std::isfinite(lw)) {
    std::ostringstream msg;
    msg << "log_importance_weight: non-finite weight " << lw << " at x = " << format_vector(x);
    throw NumericalError(msg.str());
  }
  return lw;
}

}  // namespace ex2
