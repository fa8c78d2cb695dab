#include "planval/actor/policy.hpp"

namespace planval::actor {

using ad::Tape;
using ad::Var;

Actor::Actor(Index obs_dim, Index act_dim, ActorConfig config, Rng& rng) : obs_dim_(obs_dim), act_dim_(act_dim) {
  if (obs_dim < 1 || act_dim < 1) throw PreconditionError("Actor: empty observation or action");
  ad::MlpSpec spec;
  spec.sizes.push_back(obs_dim);
  for (Index h : config.hidden) spec.sizes.push_back(h);
  spec.sizes.push_back(2 * act_dim);
  net_ = ad::add_mlp(params_, "pi", spec, rng);
}

ad::GaussianSample Actor::sample(Tape& tape, const ad::ParamStore& store, Var obs, const Matrix& noise,
                                 bool trainable) const {
  const Var out = ad::mlp_forward(tape, store, net_, obs, trainable);
  return ad::gaussian_head(ad::slice_cols(out, 0, act_dim_), ad::slice_cols(out, act_dim_, act_dim_), noise);
}

Matrix Actor::act(const Matrix& obs, Rng& rng, bool deterministic) const {
  const Matrix noise = standard_normal(obs.rows(), act_dim_, rng);
  Tape tape;
  const auto s = sample(tape, tape.constant(obs), deterministic ? Matrix::Zero(obs.rows(), act_dim_) : noise, false);
  return s.value.value();
}

model::PolicyFn Actor::policy_fn() const {
  return [this](const Matrix& obs, Rng& rng) { return act(obs, rng); };
}

PlanNoise draw_plan_noise(const Actor& actor, const model::DynamicsModel* model, Index n, Index k, Rng& rng) {
  if (k < 1) throw PreconditionError("draw_plan_noise: k must be >= 1");
  if (k > 1 && (model == nullptr || !model->ready()))
    throw StateError("planning with k > 1 needs a trained model");
  PlanNoise noise;
  for (Index m = 0; m < k; ++m) {
    noise.policy.push_back(standard_normal(n, actor.act_dim(), rng));
    if (m + 1 < k) noise.model.push_back(model->draw_noise(n, rng));
  }
  return noise;
}

PlanRollout plan(Tape& tape, const Actor& actor, const ad::ParamStore& actor_store, const model::DynamicsModel* model,
                 Var start, const PlanNoise& noise, bool actor_trainable, model::StepMode mode) {
  const Index k = noise.k();
  if (k < 1 || static_cast<Index>(noise.model.size()) != k - 1) throw ShapeError("plan: malformed plan noise");
  if (k > 1 && (model == nullptr || !model->ready())) throw StateError("plan: k > 1 needs a trained model");
  if (start.cols() != actor.obs_dim()) throw ShapeError("plan: start state width");
  PlanRollout out;
  out.start = start;
  Var s = start;
  for (Index m = 0; m < k; ++m) {
    out.states.push_back(s);
    const auto step = actor.sample(tape, actor_store, s, noise.policy[static_cast<std::size_t>(m)], actor_trainable);
    out.actions.push_back(step.value);
    out.log_probs.push_back(step.log_prob);
    if (m + 1 < k) s = model->step(tape, s, step.value, noise.model[static_cast<std::size_t>(m)], mode).next_obs;
  }
  out.plan = k == 1 ? out.actions[0] : ad::concat_cols(out.actions);
  out.plan_log_prob = out.log_probs[0];
  for (Index m = 1; m < k; ++m) out.plan_log_prob = out.plan_log_prob + out.log_probs[static_cast<std::size_t>(m)];
  return out;
}

}  // namespace planval::actor
