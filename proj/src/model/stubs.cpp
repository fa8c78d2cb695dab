#include "planval/model/stubs.hpp"

#include "planval/env/linchain.hpp"
#include "planval/env/pendulum.hpp"

namespace planval::model {

using ad::Tape;
using ad::Var;

ModelOutput PendulumModel::step(Tape&, Var obs, Var act, const StepNoise&, StepMode) const {
  using namespace env;
  const Var c = ad::slice_cols(obs, 0, 1);
  const Var s = ad::slice_cols(obs, 1, 1);
  const Var w = ad::clamp(ad::slice_cols(obs, 2, 1), -kPendulumMaxSpeed, kPendulumMaxSpeed);
  const Var u = ad::clamp(kPendulumMaxTorque * act, -kPendulumMaxTorque, kPendulumMaxTorque);
  const Var angle = ad::atan2(s, c);
  const Var reward = -(ad::square(angle) + 0.1 * ad::square(w) + 0.001 * ad::square(u));
  const Var w_next = ad::clamp(w + kPendulumDt * (15.0 * ad::sin(angle) + 3.0 * u), -kPendulumMaxSpeed, kPendulumMaxSpeed);
  const Var a_next = angle + kPendulumDt * w_next;
  return {ad::concat_cols({ad::cos(a_next), ad::sin(a_next), w_next}), reward};
}

ModelOutput LinchainModel::step(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode mode) const {
  using namespace env;
  const Var a = ad::clamp(act, -1.0, 1.0);
  Var next = kLinchainA * obs + kLinchainB * a;
  if (mode == StepMode::Sample) next = next + tape.constant(kLinchainNoise * noise.normal.col(0));
  return {next, -ad::square(obs) - 0.1 * ad::square(a)};
}

TabularModel::TabularModel(const env::TabularEnv& env) : env_(env) {}

ModelOutput TabularModel::step(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode) const {
  const Index n = obs.rows();
  const Index ns = env_.mdp().n_states();
  Matrix next = Matrix::Zero(n, ns);
  Matrix reward(n, 1);
  for (Index i = 0; i < n; ++i) {
    const Index s = env_.state_of(obs.value().row(i).transpose());
    const Index a = env::action_bin(act.value()(i, 0), env_.mdp().n_actions());
    reward(i, 0) = env_.mdp().reward(s, a);
    next(i, env_.sample_next(s, a, noise.uniform(i))) = 1.0;
  }
  return {tape.constant(std::move(next)), tape.constant(std::move(reward))};
}

PerturbedModel::PerturbedModel(const DynamicsModel& base, double sigma) : base_(base.clone()), sigma_(sigma) {
  if (!(sigma >= 0.0)) throw PreconditionError("PerturbedModel: sigma must be non-negative");
}

PerturbedModel::PerturbedModel(const PerturbedModel& other) : base_(other.base_->clone()), sigma_(other.sigma_) {}

StepNoise PerturbedModel::draw_noise(Index n, Rng& rng) const {
  StepNoise noise = base_->draw_noise(n, rng);
  noise.perturb = standard_normal(n, obs_dim(), rng);
  return noise;
}

ModelOutput PerturbedModel::step(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode mode) const {
  ModelOutput out = base_->step(tape, obs, act, noise, mode);
  if (noise.perturb.rows() != obs.rows() || noise.perturb.cols() != obs_dim())
    throw ShapeError("PerturbedModel::step: perturbation noise missing");
  out.next_obs = out.next_obs + tape.constant(sigma_ * noise.perturb);
  return out;
}

std::unique_ptr<DynamicsModel> true_model(const env::Environment& e) {
  if (dynamic_cast<const env::Pendulum*>(&e)) return std::make_unique<PendulumModel>();
  if (dynamic_cast<const env::Linchain*>(&e)) return std::make_unique<LinchainModel>();
  if (const auto* t = dynamic_cast<const env::TabularEnv*>(&e)) return std::make_unique<TabularModel>(*t);
  throw PreconditionError("true_model: no true-dynamics model for env '" + e.name() + "'");
}

}  // namespace planval::model
