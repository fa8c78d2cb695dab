#include "planval/env/env.hpp"

#include "planval/env/linchain.hpp"
#include "planval/env/pendulum.hpp"
#include "planval/env/random_mdp.hpp"
#include "planval/env/tabular_env.hpp"

#include <sstream>

namespace planval::env {

Vector Environment::reset(Rng& rng) {
  reset_state(rng);
  done_ = false;
  step_index_ = 0;
  return observation();
}

StepResult Environment::step(const Vector& action, Rng& noise) {
  if (done_) throw StateError(name() + ": step on a finished episode; call reset or inject first");
  if (action.size() != spec().act_dim)
    throw ShapeError(name() + ": action width " + std::to_string(action.size()) + ", expected " +
                     std::to_string(spec().act_dim));
  if (!action.allFinite()) throw NumericError(name() + ": non-finite action");
  const Vector clamped = action.cwiseMax(spec().action_low).cwiseMin(spec().action_high);
  const auto [reward, terminal] = advance(clamped, noise);
  ++step_index_;
  done_ = terminal || step_index_ >= spec().horizon;
  return {observation(), reward, done_, terminal};
}

void Environment::inject(const EnvState& s) {
  if (s.observation.size() != spec().obs_dim) throw ShapeError(name() + ": injected observation has the wrong width");
  if (!s.observation.allFinite()) throw NumericError(name() + ": injected observation is not finite");
  set_observation(s.observation);
  done_ = s.done;
  step_index_ = s.step_index;
}

Rollout oracle_rollout(const Environment& env, const EnvState& start, const std::vector<Vector>& actions, Rng& noise) {
  if (start.done) throw StateError("oracle_rollout: start state belongs to a terminated episode");
  auto sim = env.clone();
  sim->inject(start);
  Rollout out;
  out.states.push_back(sim->observation());
  for (const Vector& a : actions) {
    const StepResult r = sim->step(a, noise);
    out.states.push_back(r.observation);
    out.rewards.push_back(r.reward);
  }
  return out;
}

std::unique_ptr<Environment> make_env(const std::string& selector) {
  if (selector == "pendulum") return std::make_unique<Pendulum>();
  if (selector == "linchain") return std::make_unique<Linchain>();
  if (selector == "m2") return std::make_unique<TabularEnv>(toggle_mdp(), "m2");
  const std::string prefix = "random-mdp:";
  if (selector.rfind(prefix, 0) == 0) {
    std::istringstream in(selector.substr(prefix.size()));
    std::uint64_t seed = 0;
    Index ns = 0, na = 0;
    char c1 = 0, c2 = 0;
    if (!(in >> seed >> c1 >> ns >> c2 >> na) || c1 != ':' || c2 != ':' || !in.eof() || ns < 1 || na < 1)
      throw ConfigError("bad env selector '" + selector + "', expected random-mdp:<seed>:<nS>:<nA>");
    return std::make_unique<TabularEnv>(random_mdp(seed, ns, na), selector);
  }
  throw ConfigError("unknown env selector '" + selector + "' (pendulum, linchain, m2, random-mdp:<seed>:<nS>:<nA>)");
}

}  // namespace planval::env
