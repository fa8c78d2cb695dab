#include "planval/actor/tabular_bridge.hpp"

namespace planval::actor {

tabular::TabularPolicy<double> induced_policy(const Actor& actor, const env::TabularEnv& env) {
  if (actor.act_dim() != 1 || actor.obs_dim() != env.mdp().n_states())
    throw ShapeError("induced_policy: actor does not fit the tabular env");
  const Index ns = env.mdp().n_states(), na = env.mdp().n_actions();
  ad::Tape tape;
  const Matrix eye = Matrix::Identity(ns, ns);
  const auto s = actor.sample(tape, tape.constant(eye), Matrix::Zero(ns, 1), false);
  Matrix probs(ns, na);
  for (Index i = 0; i < ns; ++i)
    probs.row(i) = env::squashed_gaussian_bin_probs(s.mean.value()(i, 0), s.log_std.value()(i, 0), na).transpose();
  return tabular::TabularPolicy<double>(probs);
}

}  // namespace planval::actor
