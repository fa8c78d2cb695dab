#pragma once

#include "planval/tabular/mdp.hpp"

#include <cstdint>

namespace planval::env {

/// Random finite MDP: transition rows are normalized exponential draws (flat Dirichlet), rewards are
/// uniform on [0, 1] except that each entry is zeroed with probability `reward_sparsity`.
/// Deterministic per seed. Requires n_states <= 64 and n_actions <= 8.
tabular::TabularMDP<double> random_mdp(std::uint64_t seed, Index n_states, Index n_actions,
                                       double reward_sparsity = 0.0, double gamma = 0.9);

/// Two states; action 0 stays, action 1 toggles; reward 1 exactly when acting in state 1.
tabular::TabularMDP<double> toggle_mdp(double gamma = 0.9);

}  // namespace planval::env
