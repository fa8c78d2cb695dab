#pragma once

#include "planval/ad/nn.hpp"
#include "planval/model/model.hpp"

namespace planval::actor {

struct ActorConfig {
  std::vector<Index> hidden{64, 64};
};

/// Tanh-Gaussian policy pi_phi(a|s): an MLP from observations to (mean, raw log-std).
class Actor {
 public:
  Actor(Index obs_dim, Index act_dim, ActorConfig config, Rng& rng);

  Index obs_dim() const { return obs_dim_; }
  Index act_dim() const { return act_dim_; }
  const ad::ParamStore& params() const { return params_; }
  ad::ParamStore& params() { return params_; }
  const ad::Mlp& net() const { return net_; }

  /// Reparameterized sample with the weights read from `store` (same layout as params()).
  ad::GaussianSample sample(ad::Tape& tape, const ad::ParamStore& store, ad::Var obs, const Matrix& noise,
                            bool trainable) const;
  ad::GaussianSample sample(ad::Tape& tape, ad::Var obs, const Matrix& noise, bool trainable) const {
    return sample(tape, params_, obs, noise, trainable);
  }

  /// Numeric actions: a sample with fresh noise from `rng`, or tanh(mean) when `deterministic`.
  Matrix act(const Matrix& obs, Rng& rng, bool deterministic = false) const;
  model::PolicyFn policy_fn() const;

 private:
  Index obs_dim_, act_dim_;
  ad::Mlp net_;
  ad::ParamStore params_;
};

/// Random inputs of one batch of plans: policy noise for each of the k steps and model noise for the
/// k - 1 imagined transitions, drawn interleaved (policy 0, model 0, policy 1, ...).
struct PlanNoise {
  std::vector<Matrix> policy;
  std::vector<model::StepNoise> model;

  Index k() const { return static_cast<Index>(policy.size()); }
};

PlanNoise draw_plan_noise(const Actor& actor, const model::DynamicsModel* model, Index n, Index k, Rng& rng);

struct PlanRollout {
  ad::Var start;                  // n x obs, the state the plan is anchored at
  std::vector<ad::Var> states;    // s_t ... s_{t+k-1}; states[0] is start
  std::vector<ad::Var> actions;   // k entries, n x act
  std::vector<ad::Var> log_probs; // k entries, n x 1
  ad::Var plan;                   // n x (k * act), actions in order
  ad::Var plan_log_prob;          // n x 1, sum of the step log-probs

  Index k() const { return static_cast<Index>(actions.size()); }
};

/// Composes a k-step plan: sample a_t at `start`, step the model, sample a_{t+1}, and so on. The model's
/// parameters are frozen; gradients reach the actor through both the actions and the imagined states.
/// Raises StateError when k > 1 and the model is missing or untrained.
PlanRollout plan(ad::Tape& tape, const Actor& actor, const ad::ParamStore& actor_store,
                 const model::DynamicsModel* model, ad::Var start, const PlanNoise& noise, bool actor_trainable,
                 model::StepMode mode = model::StepMode::Sample);

}  // namespace planval::actor
