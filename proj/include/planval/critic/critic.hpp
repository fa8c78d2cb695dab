#pragma once

#include "planval/actor/policy.hpp"
#include "planval/ad/adam.hpp"
#include "planval/ad/checkpoint.hpp"
#include "planval/env/tabular_env.hpp"
#include "planval/tabular/plan.hpp"

namespace planval::critic {

/// k-step windows: s0, k actions (concatenated), k rewards, s_k. done_within[i] is the index j < k of the
/// first termination or -1.
struct SegmentBatch {
  Matrix s0;
  Matrix actions;  // n x (k * act)
  Matrix rewards;  // n x k
  Matrix s_k;
  std::vector<int> done_within;

  Index size() const { return s0.rows(); }
  Index k() const { return rewards.cols(); }
  /// Shape and finiteness checks; zeroes rewards after a termination.
  void normalize();
};

/// Plan value Q(s, tau^k).
class PlanValue {
 public:
  virtual ~PlanValue() = default;
  virtual Index k() const = 0;
  virtual Index obs_dim() const = 0;
  virtual Index act_dim() const = 0;
  /// n x 1. `target` selects the slowly tracking copy where there is one. Parameters are bound frozen.
  virtual ad::Var evaluate(ad::Tape& tape, ad::Var obs, ad::Var plan, bool target) const = 0;

  struct Counters {
    long calls = 0;
    long rows = 0;
  };
  /// Evaluation counters, advanced by every evaluate call.
  const Counters& counters() const { return counters_; }
  void reset_counters() const { counters_ = {}; }

 protected:
  void count(Index rows) const {
    ++counters_.calls;
    counters_.rows += rows;
  }
  void check_inputs(ad::Var obs, ad::Var plan) const;

 private:
  mutable Counters counters_;
};

struct CriticConfig {
  Index k = 1;
  std::vector<Index> hidden{64, 64};
  bool twin = false;
  double polyak = 0.005;
};

/// Neural plan value on (s, tau) with an online and a target parameter set. Heads are entries `q<h>.*`;
/// with twin heads the value is the minimum over heads.
class PlanCritic final : public PlanValue {
 public:
  PlanCritic(Index obs_dim, Index act_dim, CriticConfig config, Rng& rng);

  Index k() const override { return config_.k; }
  Index obs_dim() const override { return obs_dim_; }
  Index act_dim() const override { return act_dim_; }
  ad::Var evaluate(ad::Tape& tape, ad::Var obs, ad::Var plan, bool target) const override;

  /// Per-head outputs with parameters from `store`.
  std::vector<ad::Var> heads(ad::Tape& tape, const ad::ParamStore& store, ad::Var obs, ad::Var plan,
                             bool trainable) const;

  const CriticConfig& config() const { return config_; }
  const ad::ParamStore& online() const { return online_; }
  ad::ParamStore& online() { return online_; }
  const ad::ParamStore& target() const { return target_; }
  ad::ParamStore& target() { return target_; }

  /// target <- polyak * online + (1 - polyak) * target.
  void polyak_update() { target_.interpolate_from(online_, config_.polyak); }

 private:
  Index obs_dim_, act_dim_;
  CriticConfig config_;
  std::vector<ad::Mlp> nets_;
  ad::ParamStore online_, target_;
};

/// Exact plan values of a TabularEnv, looked up by state and binned plan; outputs are constants.
class TabularPlanValue final : public PlanValue {
 public:
  TabularPlanValue(tabular::PlanValueTable<double> table, Index n_states);
  Index k() const override { return table_.k; }
  Index obs_dim() const override { return n_states_; }
  Index act_dim() const override { return 1; }
  ad::Var evaluate(ad::Tape& tape, ad::Var obs, ad::Var plan, bool target) const override;
  double value(Index s, const std::vector<Index>& plan) const { return table_(s, plan); }

 private:
  tabular::PlanValueTable<double> table_;
  Index n_states_;
};

struct TargetOptions {
  double gamma = 0.99;
  bool soft = true;
  double alpha = 0.0;
  model::StepMode mode = model::StepMode::Sample;
};

/// y = sum_{m<k} gamma^m r_m + gamma^k (Q_target(s_k, tau') - alpha log pi^k(tau'|s_k)), with tau' one fresh
/// plan per row from the current planning policy; the entropy term only in soft mode. A termination at j
/// truncates the reward sum after j and drops the bootstrap. Plan noise is drawn for every row.
Vector td_target(const SegmentBatch& batch, const PlanValue& critic, const actor::Actor& actor,
                 const model::DynamicsModel* model, const TargetOptions& options, Rng& rng);

/// Mean over rows of 0.5 (Q(s0, tau) - y)^2, summed over heads; online parameters from `store`, trainable.
ad::Var critic_loss(ad::Tape& tape, const PlanCritic& critic, const ad::ParamStore& store, const SegmentBatch& batch,
                    const Vector& targets);

/// One optimizer step on critic_loss; returns the loss before the step.
double critic_update(PlanCritic& critic, ad::Adam& optimizer, const SegmentBatch& batch, const Vector& targets);

}  // namespace planval::critic
