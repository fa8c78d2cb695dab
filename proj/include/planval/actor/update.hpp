#pragma once

#include "planval/critic/critic.hpp"

namespace planval::actor {

enum class DataSource { Env, Model };

/// States handed to the actor, tagged with the buffer they came from.
struct StateBatch {
  Matrix obs;
  DataSource source = DataSource::Env;
};

/// Counts of what the actor consumed; critic_rows counts rows scored by the critic inside actor_loss.
struct ActorInstrumentation {
  long updates = 0;
  long env_states = 0;
  long model_states = 0;
  long critic_calls = 0;
  long critic_rows = 0;
};

/// mean(-Q(s_t, tau^k) + alpha log pi^k(tau^k|s_t)); the entropy term only when `soft`. The critic is called once,
/// at the plans' start states. Raises ContractViolation if the critic scores any other state.
ad::Var actor_loss(ad::Tape& tape, const critic::PlanValue& critic, const PlanRollout& plans, bool soft, double alpha,
                   ActorInstrumentation* instrumentation = nullptr);

struct ActorStepResult {
  double loss = 0.0;
  /// Mean over rows of log pi^k / k, the per-step log-probability used for temperature tuning.
  double mean_step_log_prob = 0.0;
};

struct ActorUpdateOptions {
  Index k = 1;
  bool soft = true;
  double alpha = 0.0;
  model::StepMode mode = model::StepMode::Sample;
  /// Model-buffer states are refused unless this is set.
  bool allow_model_states = false;
};

/// Builds plans from `states` with fresh noise and takes one optimizer step on actor_loss.
ActorStepResult actor_update(Actor& actor, ad::Adam& optimizer, const critic::PlanValue& critic,
                             const model::DynamicsModel* model, const StateBatch& states,
                             const ActorUpdateOptions& options, Rng& rng, ActorInstrumentation* instrumentation = nullptr);

/// Entropy temperature alpha = exp(log_alpha), stored as the single entry `log_alpha`.
class Temperature {
 public:
  Temperature(double initial_alpha, double target_entropy, ad::AdamConfig config = {});
  double alpha() const;
  double log_alpha() const { return params_.value(0)(0, 0); }
  double target_entropy() const { return target_entropy_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }
  ad::Adam& optimizer() { return optimizer_; }

  /// Gradient of -log_alpha (mean_step_log_prob + target_entropy) with respect to log_alpha.
  double gradient(double mean_step_log_prob) const { return -(mean_step_log_prob + target_entropy_); }
  /// One optimizer step; returns the temperature loss before the step.
  double update(double mean_step_log_prob);

 private:
  double target_entropy_;
  ad::ParamStore params_;
  ad::Adam optimizer_;
};

}  // namespace planval::actor
