#pragma once

#include "planval/env/env.hpp"
#include "planval/tabular/mdp.hpp"

namespace planval::env {

/// Bin of a scalar action in [-1, 1] among `n_actions` equal-width bins.
Index action_bin(double action, Index n_actions);
/// Centre of bin `a`, an action that maps back to `a`.
double bin_centre(Index a, Index n_actions);

/// Probability that tanh(mean + exp(log_std) * N(0, 1)) lands in each action bin.
Vector squashed_gaussian_bin_probs(double mean, double log_std, Index n_actions);

/// Finite MDP exposed as a continuous-control task: one-hot observations, a single action in [-1, 1]
/// binned into the MDP's actions, reward R(s, a), next state sampled from P(.|s, a) with one uniform draw.
/// Start states are uniform. There is no termination; `horizon` truncates episodes.
class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(tabular::TabularMDP<double> mdp, std::string name = "tabular", int horizon = 200);
  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return name_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularEnv>(*this); }
  Vector observation() const override;

  const tabular::TabularMDP<double>& mdp() const { return mdp_; }
  Index state_index() const { return s_; }
  /// State index of a one-hot observation; PreconditionError otherwise.
  Index state_of(const Vector& obs) const;
  Vector one_hot(Index s) const;
  /// Next state for state s, action bin a and a uniform draw u in [0, 1).
  Index sample_next(Index s, Index a, double u) const;

 protected:
  void reset_state(Rng& rng) override;
  std::pair<double, bool> advance(const Vector& action, Rng& noise) override;
  void set_observation(const Vector& obs) override;

 private:
  tabular::TabularMDP<double> mdp_;
  std::string name_;
  EnvSpec spec_;
  Index s_ = 0;
};

}  // namespace planval::env
