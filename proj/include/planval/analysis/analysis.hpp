#pragma once

#include "planval/actor/update.hpp"
#include "planval/env/env.hpp"

#include <functional>
#include <optional>

namespace planval::analysis {

/// (1 + cos(g, h)) / 2, so 0.5 means orthogonal. DegenerateInput on a zero vector.
double normalized_cosine(const Vector& g, const Vector& h);

struct GradStudyRecord {
  Index state_id = 0;
  double rollout_error = 0.0;  // mean Euclidean distance between fake and real states over the k steps
  double ncs_mppve = 0.0;
  double ncs_mbpo = 0.0;
};

struct GradStudyOptions {
  Index k = 3;
  bool soft = true;
  double alpha = 0.0;
  /// Critics whose measured residual exceeds this are refused.
  double residual_threshold = 0.25;
  double plan_critic_residual = 0.0;
  double step_critic_residual = 0.0;
};

struct FrozenCriticOptions {
  Index k = 3;
  std::vector<Index> hidden{64, 64};
  Index data_steps = 5000;
  Index iterations = 10000;
  Index batch_size = 256;
  double lr = 1e-3;
  double polyak = 0.02;
  /// Target draws averaged per window when measuring the residual.
  Index residual_draws = 16;
  critic::TargetOptions target;
};

struct FrozenCriticFit {
  critic::PlanCritic critic;
  /// RMS error against the averaged targets on fresh windows, divided by the standard deviation of those targets.
  double residual = 0.0;
};

/// Fits a plan critic to the frozen `actor` on windows of its own real-environment experience, with plan
/// bootstraps through the frozen `model` (unused when k = 1).
FrozenCriticFit fit_frozen_critic(const env::Environment& env, const actor::Actor& actor,
                                  const model::DynamicsModel* model, const FrozenCriticOptions& options, Rng& rng);

/// Flattened gradient of a scalar loss with respect to every entry of the actor's parameters.
Vector actor_gradient(const actor::Actor& actor, const std::function<ad::Var(ad::Tape&)>& loss);

/// Compares policy gradients computed on real rollouts (true dynamics through `env`, differentiable via its
/// stub model) with those computed on the fake rollouts of `model`, under shared policy noise. Per start
/// state: the plan gradient at the start state only, and the average of single-step gradients over the
/// rollout states. PreconditionError when either critic residual is above the threshold or the env has
/// no differentiable stub.
std::vector<GradStudyRecord> gradient_direction_study(const env::Environment& env, const model::DynamicsModel& model,
                                                      const actor::Actor& actor, const critic::PlanValue& plan_critic,
                                                      const critic::PlanValue& step_critic, const Matrix& states,
                                                      const GradStudyOptions& options, Rng& rng);

struct SevereBin {
  double lo = 0.0, hi = 0.0;
  Index count = 0;
  std::optional<double> ratio_mppve;  // absent when the bin holds no record
  std::optional<double> ratio_mbpo;
};

/// Fraction of records with ncs < 0.5 per rollout-error bin; `edges` are ascending bin boundaries and a
/// record falls in [edges[i], edges[i+1]) (the last bin is closed).
std::vector<SevereBin> severe_error_ratio(const std::vector<GradStudyRecord>& records, const std::vector<double>& edges);

/// Estimates Q_pi(s, plan) as the mean discounted return of executing `plan` open-loop from `s` and then
/// following the policy. Episode horizons are ignored: a truncated episode is resumed from its last state.
struct MonteCarloOptions {
  Index n_rollouts = 100;
  double gamma = 0.99;
  bool soft = false;
  double alpha = 0.0;
  /// Truncation horizon; 0 picks the smallest H with gamma^H < 1e-4.
  Index horizon = 0;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

Index mc_horizon(double gamma);

MonteCarloEstimate mc_plan_value(const env::Environment& env, const Vector& state, const Matrix& plan,
                                 const actor::Actor& actor, const MonteCarloOptions& options, Rng& rng);

struct ValueBiasSample {
  Vector state;
  Matrix plan;  // k x act
  double q_hat = 0.0;
  double q_mc = 0.0;
  double q_mc_se = 0.0;
};

struct ValueBiasReport {
  std::vector<ValueBiasSample> samples;
  double denominator = 0.0;  // |mean of q_mc|
  double mean_bias = 0.0;
  double std_bias = 0.0;
};

/// On-policy states gathered by running the stochastic policy in `env` from resets.
Matrix on_policy_states(const env::Environment& env, const actor::Actor& actor, Index n, Rng& rng);

/// Normalized bias (Q_hat - Q_mc) / |mean Q_mc| over on-policy states and plans sampled from the policy
/// through the real environment. DegenerateInput when the denominator is zero.
ValueBiasReport value_bias_study(const env::Environment& env, const actor::Actor& actor,
                                 const critic::PlanValue& critic, Index n_states, const MonteCarloOptions& options,
                                 Rng& rng);

/// Mean and population std of (q_hat - q_ref) / |mean q_ref|; DegenerateInput when the denominator is zero.
std::pair<double, double> normalized_bias(const Vector& q_hat, const Vector& q_ref);

}  // namespace planval::analysis
