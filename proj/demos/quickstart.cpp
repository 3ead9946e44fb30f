// Ex2MCMC on the uneven 2D mixture, compared with its two halves.

#include <iostream>

#include "ex2mcmc/ex2mcmc.hpp"

int main() {
  using namespace ex2;
  const TargetPtr target = presets::mixture_2d_uneven();
  const auto proposal = IsotropicGaussianProposal::centered(2, 4.0);

  struct Run {
    const char* name;
    int particles;
    int mala_steps;
  };
  for (const Run r : {Run{"i-SIR", 3, 0}, Run{"MALA", 1, 3}, Run{"Ex2MCMC", 3, 3}}) {
    Rng rng(2024, 0);
    Ex2Sampler sampler(target, proposal, IsirConfig{r.particles, false}, MalaConfig{0.5, r.mala_steps},
                       StepSizeAdaptation{false, 0.5, 0.0});
    const ChainResult res = sampler.run(Vector::Zero(2), 850, 50, rng);
    const TvKl d = kde_tv_and_kl(res.trajectory, *target);
    const AcceptanceSummary acc = acceptance_summary(res.stats);
    std::cout << r.name << ": TV " << d.tv << ", KL " << d.kl << ", global moves " << acc.global_move_rate
              << ", MALA acceptance " << acc.mala_rate << "\n";
  }
}
