#pragma once

#include "planval/actor/policy.hpp"
#include "planval/env/tabular_env.hpp"
#include "planval/tabular/mdp.hpp"

namespace planval::actor {

/// The finite policy an actor induces on a TabularEnv: per state, the probability that its squashed
/// Gaussian action lands in each action bin.
tabular::TabularPolicy<double> induced_policy(const Actor& actor, const env::TabularEnv& env);

}  // namespace planval::actor
