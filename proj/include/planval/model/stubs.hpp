#pragma once

#include "planval/env/tabular_env.hpp"
#include "planval/model/model.hpp"

namespace planval::model {

/// Pendulum physics written with tape ops, so the stub is differentiable in (obs, act).
class PendulumModel final : public DynamicsModel {
 public:
  Index obs_dim() const override { return 3; }
  Index act_dim() const override { return 1; }
  bool ready() const override { return true; }
  ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const override;
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<PendulumModel>(*this); }
};

/// Linear chain; Sample mode uses column 0 of the normal draw as the transition noise.
class LinchainModel final : public DynamicsModel {
 public:
  Index obs_dim() const override { return 1; }
  Index act_dim() const override { return 1; }
  bool ready() const override { return true; }
  ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const override;
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<LinchainModel>(*this); }
};

/// Exact transition table behind a TabularEnv. Successors are sampled with the noise uniforms in both modes;
/// outputs are constants.
class TabularModel final : public DynamicsModel {
 public:
  explicit TabularModel(const env::TabularEnv& env);
  Index obs_dim() const override { return env_.mdp().n_states(); }
  Index act_dim() const override { return 1; }
  bool ready() const override { return true; }
  ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const override;
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<TabularModel>(*this); }

 private:
  env::TabularEnv env_;
};

/// Adds sigma * N(0, 1) to the predicted next observation of `base`.
class PerturbedModel final : public DynamicsModel {
 public:
  PerturbedModel(const DynamicsModel& base, double sigma);
  PerturbedModel(const PerturbedModel& other);
  Index obs_dim() const override { return base_->obs_dim(); }
  Index act_dim() const override { return base_->act_dim(); }
  bool ready() const override { return base_->ready(); }
  StepNoise draw_noise(Index n, Rng& rng) const override;
  ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const override;
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<PerturbedModel>(*this); }
  double sigma() const { return sigma_; }

 private:
  std::unique_ptr<DynamicsModel> base_;
  double sigma_;
};

/// True-dynamics stub for a built-in environment; PreconditionError for unknown types.
std::unique_ptr<DynamicsModel> true_model(const env::Environment& env);

}  // namespace planval::model
