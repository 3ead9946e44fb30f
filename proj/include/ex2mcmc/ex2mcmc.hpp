#pragma once

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"
#include "ex2mcmc/flow.hpp"
#include "ex2mcmc/proposals.hpp"
#include "ex2mcmc/kernels.hpp"
#include "ex2mcmc/adapt.hpp"
#include "ex2mcmc/metrics.hpp"
#include "ex2mcmc/theory.hpp"
#include "ex2mcmc/bench.hpp"
