#pragma once

#include "planval/ad/checkpoint.hpp"
#include "planval/env/env.hpp"
#include "planval/model/ensemble.hpp"
#include "planval/trainer/buffer.hpp"
#include "planval/trainer/learner.hpp"

#include <iosfwd>
#include <memory>

namespace planval::trainer {

struct MetricsRow {
  long env_step = 0;
  double episodic_return = 0.0;    // mean over eval.episodes deterministic episodes
  double critic_loss = 0.0;        // mean since the previous row
  double actor_loss = 0.0;         // mean since the previous row
  double model_holdout_nll = 0.0;  // best mean member holdout NLL of the latest model fit, 0 without a model
  double alpha = 0.0;
  long rollout_length = 0;
  double wall_clock = 0.0;         // seconds since the start; 0 unless metrics.wall_clock
};

inline constexpr const char* kMetricsHeader =
    "env_step,episodic_return,critic_loss,actor_loss,model_holdout_nll,alpha,rollout_length,wall_clock";

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct RunResult {
  std::vector<MetricsRow> metrics;
  ad::Checkpoint checkpoint;
  actor::ActorInstrumentation actor_counts;
  long env_steps = 0;
  long critic_updates = 0;
  long actor_updates = 0;
  long model_fits = 0;
  Index env_buffer_size = 0;
  bool stopped_early = false;
  /// Env steps at which the evaluation return first reached stop.return (-1 if never).
  long steps_to_stop = -1;
};

/// Mean return of `episodes` deterministic episodes run side by side.
double evaluate_policy_return(const env::Environment& env, const actor::Actor& actor, Index episodes, Rng& rng);

/// Algorithm driver for variant mppve.
RunResult run_mppve(const TrainerConfig& config);
/// The ablations and the SAC baseline (variant != mppve).
RunResult run_ablation(const TrainerConfig& config);
/// Dispatches on config.variant.
RunResult run(const TrainerConfig& config);

/// Everything a trained run leaves behind, rebuilt from its checkpoint.
struct Agent {
  TrainerConfig config;
  std::unique_ptr<env::Environment> env;
  std::unique_ptr<Learner> learner;
  std::unique_ptr<model::EnsembleModel> model;  // null for variants without a model
};

Agent load_agent(const ad::Checkpoint& ckpt);

}  // namespace planval::trainer
