#include "planval/trainer/learner.hpp"

namespace planval::trainer {

using ad::Tape;

Vector mve_target(const critic::SegmentBatch& batch, const critic::PlanValue& critic, const actor::Actor& actor,
                  const model::DynamicsModel* model, Index horizon, const critic::TargetOptions& options, Rng& rng) {
  if (batch.k() != 1 || critic.k() != 1) throw ShapeError("mve_target: needs single-step windows and critic");
  if (horizon < 0) throw PreconditionError("mve_target: horizon must be >= 0");
  if (horizon > 0 && (model == nullptr || !model->ready())) throw StateError("mve_target: needs a trained model");
  const Index n = batch.size();
  Tape tape;
  Matrix s = batch.s_k;
  Vector expansion = Vector::Zero(n);
  double g = 1.0;
  for (Index h = 1; h <= horizon; ++h) {
    g *= options.gamma;
    const Matrix noise = standard_normal(n, actor.act_dim(), rng);
    const auto step_noise = model->draw_noise(n, rng);
    const auto a = actor.sample(tape, tape.constant(s), noise, false);
    const auto out = model->step(tape, tape.constant(s), a.value, step_noise, options.mode);
    expansion += g * out.reward.value().col(0);
    s = out.next_obs.value();
  }
  const Matrix noise = standard_normal(n, actor.act_dim(), rng);
  const auto a = actor.sample(tape, tape.constant(s), noise, false);
  const Matrix q = critic.evaluate(tape, tape.constant(s), a.value, true).value();
  const Matrix& lp = a.log_prob.value();
  const double gk = g * options.gamma;
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    if (batch.done_within[static_cast<std::size_t>(i)] >= 0) {
      y(i) = batch.rewards(i, 0);
      continue;
    }
    const double boot = options.soft ? q(i, 0) - options.alpha * lp(i, 0) : q(i, 0);
    y(i) = horizon == 0 ? batch.rewards(i, 0) + gk * boot : batch.rewards(i, 0) + expansion(i) + gk * boot;
  }
  if (!y.allFinite()) throw NumericError("mve_target: non-finite target");
  return y;
}

namespace {

critic::CriticConfig critic_config(const TrainerConfig& c) {
  critic::CriticConfig out;
  out.k = c.plan_length();
  out.hidden = c.hidden;
  out.twin = c.twin;
  out.polyak = c.polyak;
  return out;
}

}  // namespace

Learner::Learner(Index obs_dim, Index act_dim, const TrainerConfig& config, Rng& init)
    : config_(config),
      actor_(obs_dim, act_dim, {config.hidden}, init),
      critic_(obs_dim, act_dim, critic_config(config), init),
      temperature_(config.alpha, config.target_entropy, {config.lr_alpha}),
      actor_opt_(actor_.params(), {config.lr_actor}),
      critic_opt_(critic_.online(), {config.lr_critic}) {}

critic::TargetOptions Learner::target_options() const {
  critic::TargetOptions o;
  o.gamma = config_.gamma;
  o.soft = config_.soft;
  o.alpha = alpha();
  o.mode = config_.model_noise == "mean" ? model::StepMode::Mean : model::StepMode::Sample;
  return o;
}

double Learner::critic_step(const critic::SegmentBatch& batch, const model::DynamicsModel* model, Rng& rng) {
  const Vector y = config_.uses_mve() ? mve_target(batch, critic_, actor_, model, config_.mve_horizon, target_options(), rng)
                                      : critic::td_target(batch, critic_, actor_, model, target_options(), rng);
  const double loss = critic::critic_update(critic_, critic_opt_, batch, y);
  critic_.polyak_update();
  ++critic_updates_;
  return loss;
}

actor::ActorStepResult Learner::actor_step(const actor::StateBatch& states, const model::DynamicsModel* model, Rng& rng) {
  actor::ActorUpdateOptions o;
  o.k = config_.plan_length();
  o.soft = config_.soft;
  o.alpha = alpha();
  o.mode = target_options().mode;
  o.allow_model_states = config_.variant == "sac-mve-mpi";
  const auto r = actor::actor_update(actor_, actor_opt_, critic_, model, states, o, rng, &instrumentation_);
  if (config_.soft && config_.auto_alpha) temperature_.update(r.mean_step_log_prob);
  return r;
}

}  // namespace planval::trainer
