#pragma once

#include "planval/actor/update.hpp"
#include "planval/trainer/config.hpp"

namespace planval::trainer {

/// H-step model value expansion target for a single-step critic on k=1 windows:
/// r + sum_{h=1..H} gamma^h r_h + gamma^{H+1} (Q_target(s_{H+1}, a') - alpha log pi(a'|s_{H+1})), with imagined
/// states and rewards from `model` under the current policy. Terminal rows give r. With H = 0 the draws and the
/// arithmetic are those of td_target with k = 1.
Vector mve_target(const critic::SegmentBatch& batch, const critic::PlanValue& critic, const actor::Actor& actor,
                  const model::DynamicsModel* model, Index horizon, const critic::TargetOptions& options, Rng& rng);

/// Actor, plan critic and temperature with their optimizers: the update rules shared by every variant.
class Learner {
 public:
  Learner(Index obs_dim, Index act_dim, const TrainerConfig& config, Rng& init);

  /// Targets (plan TD or MVE), one critic step and one polyak step; returns the critic loss.
  double critic_step(const critic::SegmentBatch& batch, const model::DynamicsModel* model, Rng& rng);
  /// One actor step and, with automatic tuning, one temperature step.
  actor::ActorStepResult actor_step(const actor::StateBatch& states, const model::DynamicsModel* model, Rng& rng);

  double alpha() const { return config_.auto_alpha ? temperature_.alpha() : config_.alpha; }
  critic::TargetOptions target_options() const;

  const actor::Actor& actor() const { return actor_; }
  actor::Actor& actor() { return actor_; }
  const critic::PlanCritic& critic() const { return critic_; }
  critic::PlanCritic& critic() { return critic_; }
  const actor::Temperature& temperature() const { return temperature_; }
  const actor::ActorInstrumentation& instrumentation() const { return instrumentation_; }
  long critic_updates() const { return critic_updates_; }

 private:
  TrainerConfig config_;
  actor::Actor actor_;
  critic::PlanCritic critic_;
  actor::Temperature temperature_;
  ad::Adam actor_opt_, critic_opt_;
  actor::ActorInstrumentation instrumentation_;
  long critic_updates_ = 0;
};

}  // namespace planval::trainer
