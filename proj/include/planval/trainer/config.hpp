#pragma once

#include "planval/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace planval::trainer {

inline const std::vector<std::string> kVariants{"mppve", "sac-mppve", "sac-mve", "sac-mve-mpi", "sac"};

struct ScheduleConfig {
  double x = 1.0;
  double y = 1.0;
  double a = 0.0;
  double b = 1.0;
};

/// Every field is addressable in a config file by the dotted key in its comment.
struct TrainerConfig {
  std::string env = "pendulum";       // env
  std::string variant = "mppve";      // variant
  Index k = 3;                        // k
  bool soft = true;                   // soft
  double alpha = 0.2;                 // alpha
  bool auto_alpha = true;             // alpha.auto
  double target_entropy = -1.0;       // alpha.target_entropy
  Index epochs = 30;                  // epochs
  Index steps_per_epoch = 1000;       // steps_per_epoch
  Index rollouts = 400;               // rollouts
  Index rollout_every = 10;           // rollout_every
  Index critic_updates = 20;          // critic_updates
  Index actor_updates = 1;            // actor_updates
  Index start_size = 1000;            // start_size
  Index batch_size = 256;             // batch_size
  double lr_critic = 3e-4;            // lr.critic
  double lr_actor = 3e-4;             // lr.actor
  double lr_alpha = 3e-4;             // lr.alpha
  double lr_model = 1e-3;             // lr.model
  double polyak = 0.005;              // polyak
  double gamma = 0.99;                // gamma
  double real_ratio = 0.1;            // real_ratio
  bool twin = false;                  // twin
  ScheduleConfig schedule;            // schedule.x, schedule.y, schedule.a, schedule.b
  std::vector<Index> hidden{64, 64};  // hidden
  Index ensemble_members = 5;         // ensemble.members
  Index ensemble_elites = 3;          // ensemble.elites
  std::vector<Index> model_hidden{64, 64};  // ensemble.hidden
  int model_max_epochs = 20;          // model.max_epochs
  Index model_batch_size = 256;       // model.batch_size
  double model_holdout = 0.2;         // model.holdout
  int model_patience = 5;             // model.patience
  Index model_max_updates = 0;        // model.max_updates
  std::string model_noise = "sample"; // model.noise (sample | mean)
  Index env_capacity = 100000;        // buffer.env
  Index model_capacity = 1000000;     // buffer.model
  Index eval_interval = 1000;         // eval.interval
  Index eval_episodes = 10;           // eval.episodes
  Index mve_horizon = 1;              // mve.horizon
  std::uint64_t seed = 0;             // seed
  bool wall_clock = false;            // metrics.wall_clock
  std::optional<double> stop_return;  // stop.return
  std::string metrics_path;           // output.metrics
  std::string checkpoint_path;        // output.checkpoint

  /// Plan length used by the critic and actor: k for the plan-value variants, 1 otherwise.
  Index plan_length() const { return variant == "mppve" || variant == "sac-mppve" ? k : 1; }
  bool uses_model() const { return variant != "sac"; }
  bool uses_model_buffer() const { return variant == "mppve" || variant == "sac-mve-mpi"; }
  bool uses_mve() const { return variant == "sac-mve" || variant == "sac-mve-mpi"; }
};

/// Raises ConfigError on an invalid combination.
void validate(const TrainerConfig& config);

/// Applies one `key = value` assignment; ConfigError for unknown keys or unparsable values.
void set_option(TrainerConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines with `#` comments over the defaults, then validates.
TrainerConfig parse_config(const std::string& text);
TrainerConfig load_config(const std::string& path);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const TrainerConfig& config);

}  // namespace planval::trainer
