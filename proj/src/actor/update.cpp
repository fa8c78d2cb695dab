#include "planval/actor/update.hpp"

#include <cmath>

namespace planval::actor {

using ad::Tape;
using ad::Var;

Var actor_loss(Tape& tape, const critic::PlanValue& critic, const PlanRollout& plans, bool soft, double alpha,
               ActorInstrumentation* instrumentation) {
  const auto before = critic.counters();
  const Var q = critic.evaluate(tape, plans.start, plans.plan, false);
  const auto after = critic.counters();
  const long rows = after.rows - before.rows;
  if (after.calls - before.calls != 1 || rows != plans.start.rows())
    throw ContractViolation("actor_loss: the critic scored states other than the plan start states");
  if (instrumentation) {
    instrumentation->critic_calls += after.calls - before.calls;
    instrumentation->critic_rows += rows;
  }
  Var per_row = -q;
  if (soft) per_row = per_row + alpha * plans.plan_log_prob;
  return ad::mean(per_row);
}

ActorStepResult actor_update(Actor& actor, ad::Adam& optimizer, const critic::PlanValue& critic,
                             const model::DynamicsModel* model, const StateBatch& states,
                             const ActorUpdateOptions& options, Rng& rng, ActorInstrumentation* instrumentation) {
  if (states.source == DataSource::Model && !options.allow_model_states)
    throw ContractViolation("actor_update: the actor is trained on environment states only");
  if (options.k != critic.k()) throw ShapeError("actor_update: plan length differs from the critic's k");
  const Index n = states.obs.rows();
  Tape tape;
  const PlanNoise noise = draw_plan_noise(actor, model, n, options.k, rng);
  const auto roll = plan(tape, actor, actor.params(), model, tape.constant(states.obs), noise, true, options.mode);
  const Var loss = actor_loss(tape, critic, roll, options.soft, options.alpha, instrumentation);
  if (!std::isfinite(loss.scalar())) throw NumericError("actor_update: non-finite loss");
  tape.backward(loss);
  optimizer.step(actor.params(), tape.gradients(actor.params()));
  if (instrumentation) {
    ++instrumentation->updates;
    (states.source == DataSource::Env ? instrumentation->env_states : instrumentation->model_states) += n;
  }
  return {loss.scalar(), roll.plan_log_prob.value().mean() / static_cast<double>(options.k)};
}

Temperature::Temperature(double initial_alpha, double target_entropy, ad::AdamConfig config)
    : target_entropy_(target_entropy) {
  if (!(initial_alpha > 0.0)) throw PreconditionError("Temperature: alpha must be positive");
  params_.add("log_alpha", Matrix::Constant(1, 1, std::log(initial_alpha)));
  optimizer_ = ad::Adam(params_, config);
}

double Temperature::alpha() const { return std::exp(log_alpha()); }

double Temperature::update(double mean_step_log_prob) {
  const double g = gradient(mean_step_log_prob);
  const double loss = g * log_alpha();
  optimizer_.step(params_, {Matrix::Constant(1, 1, g)});
  return loss;
}

}  // namespace planval::actor
