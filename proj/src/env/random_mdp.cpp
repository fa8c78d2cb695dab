#include "planval/env/random_mdp.hpp"

#include <cmath>

namespace planval::env {

tabular::TabularMDP<double> random_mdp(std::uint64_t seed, Index n_states, Index n_actions,
                                       double reward_sparsity, double gamma) {
  if (n_states < 1 || n_states > 64 || n_actions < 1 || n_actions > 8)
    throw PreconditionError("random_mdp: need 1 <= n_states <= 64 and 1 <= n_actions <= 8");
  if (reward_sparsity < 0.0 || reward_sparsity > 1.0)
    throw PreconditionError("random_mdp: reward_sparsity must lie in [0, 1]");
  Rng rng = derive_rng(seed, 0x6d6470);
  Matrix transition(n_states * n_actions, n_states);
  for (Index row = 0; row < transition.rows(); ++row) {
    for (Index j = 0; j < n_states; ++j) transition(row, j) = -std::log(1.0 - uniform01(rng));
    transition.row(row) /= transition.row(row).sum();
  }
  Matrix reward(n_states, n_actions);
  for (Index s = 0; s < n_states; ++s)
    for (Index a = 0; a < n_actions; ++a) {
      const double r = uniform01(rng);
      reward(s, a) = uniform01(rng) < reward_sparsity ? 0.0 : r;
    }
  return {std::move(transition), std::move(reward), gamma};
}

tabular::TabularMDP<double> toggle_mdp(double gamma) {
  Matrix transition(4, 2);
  transition << 1, 0,  // s0, stay
      0, 1,            // s0, toggle
      0, 1,            // s1, stay
      1, 0;            // s1, toggle
  Matrix reward(2, 2);
  reward << 0, 0, 1, 1;
  return {std::move(transition), std::move(reward), gamma};
}

}  // namespace planval::env
