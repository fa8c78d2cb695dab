#include "planval/env/tabular_env.hpp"

#include "planval/ad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace planval::env {

Index action_bin(double action, Index n_actions) {
  const double a = std::clamp(action, -1.0, 1.0);
  const auto b = static_cast<Index>(std::floor((a + 1.0) * 0.5 * static_cast<double>(n_actions)));
  return std::min(b, n_actions - 1);
}

double bin_centre(Index a, Index n_actions) {
  return -1.0 + (2.0 * static_cast<double>(a) + 1.0) / static_cast<double>(n_actions);
}

Vector squashed_gaussian_bin_probs(double mean, double log_std, Index n_actions) {
  const double sd = std::exp(std::clamp(log_std, ad::kLogStdMin, ad::kLogStdMax));
  auto cdf_at_edge = [&](Index j) {
    if (j == 0) return 0.0;
    if (j == n_actions) return 1.0;
    const double edge = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n_actions);
    const double z = (std::atanh(edge) - mean) / sd;
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
  };
  Vector p(n_actions);
  for (Index j = 0; j < n_actions; ++j) p(j) = std::max(0.0, cdf_at_edge(j + 1) - cdf_at_edge(j));
  return p / p.sum();
}

TabularEnv::TabularEnv(tabular::TabularMDP<double> mdp, std::string name, int horizon)
    : mdp_(std::move(mdp)), name_(std::move(name)) {
  if (horizon < 1) throw PreconditionError("TabularEnv: horizon must be >= 1");
  spec_ = {mdp_.n_states(), 1, -1.0, 1.0, horizon, mdp_.reward().minCoeff(), mdp_.reward().maxCoeff()};
}

Vector TabularEnv::observation() const { return one_hot(s_); }

Vector TabularEnv::one_hot(Index s) const { return Vector::Unit(mdp_.n_states(), s); }

Index TabularEnv::state_of(const Vector& obs) const {
  Index arg = 0;
  const double mx = obs.maxCoeff(&arg);
  if (obs.size() != mdp_.n_states() || mx != 1.0 || obs.sum() != 1.0)
    throw PreconditionError(name_ + ": observation is not one-hot");
  return arg;
}

Index TabularEnv::sample_next(Index s, Index a, double u) const {
  const auto row = mdp_.next(s, a);
  double acc = 0.0;
  Index last = 0;
  for (Index j = 0; j < row.size(); ++j) {
    if (row(j) <= 0.0) continue;
    acc += row(j);
    last = j;
    if (u < acc) return j;
  }
  return last;
}

void TabularEnv::reset_state(Rng& rng) { s_ = uniform_index(mdp_.n_states(), rng); }

std::pair<double, bool> TabularEnv::advance(const Vector& action, Rng& noise) {
  const Index a = action_bin(action(0), mdp_.n_actions());
  const double r = mdp_.reward(s_, a);
  s_ = sample_next(s_, a, uniform01(noise));
  return {r, false};
}

void TabularEnv::set_observation(const Vector& obs) { s_ = state_of(obs); }

}  // namespace planval::env
