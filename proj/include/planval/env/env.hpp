#pragma once

#include "planval/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace planval::env {

struct EnvSpec {
  Index obs_dim = 0;
  Index act_dim = 0;
  /// Actions are always presented to the agent in [action_low, action_high] = [-1, 1]; envs rescale.
  double action_low = -1.0;
  double action_high = 1.0;
  int horizon = 1;
  double reward_min = 0.0;
  double reward_max = 0.0;
};

/// Externally visible state of an episode.
struct EnvState {
  Vector observation;
  bool done = false;
  int step_index = 0;
};

struct StepResult {
  Vector observation;
  double reward = 0.0;
  /// Episode over (true termination or the horizon reached).
  bool done = false;
  /// True termination only; reaching the horizon is a truncation.
  bool terminal = false;
};

/// Environment with explicit noise streams and state injection.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Starts an episode; start-state randomness comes from `rng`.
  Vector reset(Rng& rng);
  /// Advances one step with transition noise drawn from `noise`. Raises StateError once done.
  StepResult step(const Vector& action, Rng& noise);

  EnvState state() const { return {observation(), done_, step_index_}; }
  /// Puts the environment into `s` (observation, step counter and done flag).
  void inject(const EnvState& s);

  virtual Vector observation() const = 0;
  bool done() const { return done_; }
  int step_index() const { return step_index_; }

 protected:
  virtual void reset_state(Rng& rng) = 0;
  /// Applies a clamped action; returns (reward, terminal).
  virtual std::pair<double, bool> advance(const Vector& action, Rng& noise) = 0;
  virtual void set_observation(const Vector& obs) = 0;

 private:
  bool done_ = true;
  int step_index_ = 0;
};

struct Rollout {
  std::vector<Vector> states;  // start state plus one per action
  std::vector<double> rewards;
};

/// Ground-truth rollout from an injected start state on a clone of `env`.
/// Raises StateError when `start` is already done.
Rollout oracle_rollout(const Environment& env, const EnvState& start, const std::vector<Vector>& actions, Rng& noise);

/// `pendulum`, `linchain`, `m2`, or `random-mdp:<seed>:<n_states>:<n_actions>`.
std::unique_ptr<Environment> make_env(const std::string& selector);

}  // namespace planval::env
