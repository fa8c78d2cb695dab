#include "planval/trainer/trainer.hpp"

#include "planval/trainer/schedule.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace planval::trainer {

namespace {

enum Stream : std::uint64_t { kInit = 1, kReset, kEnvNoise, kExplore, kModel, kRollout, kCritic, kActor, kEval, kBatch };

std::string show(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Index critic_env_rows(const TrainerConfig& c, bool have_model_data) {
  if (c.variant != "mppve" || !have_model_data) return c.batch_size;
  return static_cast<Index>(std::llround(c.real_ratio * static_cast<double>(c.batch_size)));
}

critic::SegmentBatch concat(const critic::SegmentBatch& a, const critic::SegmentBatch& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  critic::SegmentBatch out;
  out.s0.resize(a.size() + b.size(), a.s0.cols());
  out.s0 << a.s0, b.s0;
  out.actions.resize(out.s0.rows(), a.actions.cols());
  out.actions << a.actions, b.actions;
  out.rewards.resize(out.s0.rows(), a.rewards.cols());
  out.rewards << a.rewards, b.rewards;
  out.s_k.resize(out.s0.rows(), a.s_k.cols());
  out.s_k << a.s_k, b.s_k;
  out.done_within = a.done_within;
  out.done_within.insert(out.done_within.end(), b.done_within.begin(), b.done_within.end());
  return out;
}

class Run {
 public:
  explicit Run(const TrainerConfig& config)
      : c_(config),
        env_(env::make_env(config.env)),
        eval_env_(env_->clone()),
        init_(derive_rng(config.seed, kInit)),
        reset_(derive_rng(config.seed, kReset)),
        noise_(derive_rng(config.seed, kEnvNoise)),
        explore_(derive_rng(config.seed, kExplore)),
        model_rng_(derive_rng(config.seed, kModel)),
        rollout_rng_(derive_rng(config.seed, kRollout)),
        critic_rng_(derive_rng(config.seed, kCritic)),
        actor_rng_(derive_rng(config.seed, kActor)),
        eval_rng_(derive_rng(config.seed, kEval)),
        batch_rng_(derive_rng(config.seed, kBatch)),
        learner_(env_->spec().obs_dim, env_->spec().act_dim, config, init_),
        env_buffer_(config.env_capacity, env_->spec().obs_dim, env_->spec().act_dim, actor::DataSource::Env),
        model_buffer_(config.uses_model_buffer() ? config.model_capacity : 1, env_->spec().obs_dim,
                      env_->spec().act_dim, actor::DataSource::Model) {
    validate(c_);
    if (c_.uses_model())
      model_ = std::make_unique<model::EnsembleModel>(
          env_->spec().obs_dim, env_->spec().act_dim,
          model::EnsembleConfig{c_.ensemble_members, c_.ensemble_elites, c_.model_hidden}, init_);
    start_ = std::chrono::steady_clock::now();
  }

  RunResult execute() {
    try {
      loop();
    } catch (const Error&) {
      if (!c_.checkpoint_path.empty()) {
        try {
          ad::save_checkpoint(c_.checkpoint_path + ".crash", checkpoint());
        } catch (const Error&) {
        }
      }
      throw;
    }
    result_.checkpoint = checkpoint();
    result_.actor_counts = learner_.instrumentation();
    result_.critic_updates = learner_.critic_updates();
    result_.actor_updates = learner_.instrumentation().updates;
    result_.env_buffer_size = env_buffer_.size();
    return std::move(result_);
  }

 private:
  void env_step(const Vector& action) {
    const Vector s = env_->observation();
    const auto r = env_->step(action, noise_);
    env_buffer_.add(s, action, r.reward, r.observation, r.terminal, r.done);
    ++result_.env_steps;
    if (r.done) env_->reset(reset_);
  }

  void loop() {
    env_->reset(reset_);
    const Index act_dim = env_->spec().act_dim;
    for (Index t = 0; t < c_.start_size; ++t) {
      Vector a(act_dim);
      for (Index j = 0; j < act_dim; ++j) a(j) = 2.0 * uniform01(explore_) - 1.0;
      env_step(a);
      if (maybe_eval()) return;
    }
    for (Index epoch = 0; epoch < c_.epochs; ++epoch) {
      if (model_) fit_model();
      for (Index t = 0; t < c_.steps_per_epoch; ++t) {
        const Matrix a = learner_.actor().act(env_->observation().transpose(), explore_);
        env_step(a.row(0).transpose());
        if (c_.uses_model_buffer() && result_.env_steps % c_.rollout_every == 0) rollout();
        for (Index g = 0; g < c_.critic_updates; ++g) critic_update();
        for (Index g = 0; g < c_.actor_updates; ++g) actor_update();
        if (maybe_eval()) return;
      }
    }
  }

  void fit_model() {
    model::ModelTrainConfig mc;
    mc.holdout_fraction = c_.model_holdout;
    mc.max_epochs = c_.model_max_epochs;
    mc.patience = c_.model_patience;
    const auto data = env_buffer_.transitions();
    mc.batch_size = std::min(c_.model_batch_size, std::max<Index>(1, data.s.rows() / 10));
    mc.max_updates_per_epoch = c_.model_max_updates;
    mc.adam.lr = c_.lr_model;
    const auto report = model::train_model(*model_, data, mc, model_rng_);
    double best = 0.0;
    for (double h : report.member_holdout) best += h / static_cast<double>(report.member_holdout.size());
    last_nll_ = best;
    ++result_.model_fits;
    model_buffer_.clear();
  }

  Index rollout_length() const { return rollout_schedule(static_cast<double>(result_.env_steps), c_.schedule); }

  void rollout() {
    const Index len = rollout_length() + (c_.variant == "mppve" ? c_.plan_length() - 1 : 0);
    const auto r = model::branched_rollout(*model_, learner_.actor().policy_fn(), env_buffer_.states(), c_.rollouts, len,
                                           rollout_rng_, learner_.target_options().mode);
    model_buffer_.add_rollouts(r);
  }

  void critic_update() {
    const Index k = c_.plan_length();
    const bool have_model = c_.variant == "mppve" && model_buffer_.size() > 0;
    const Index n_env = critic_env_rows(c_, have_model);
    critic::SegmentBatch batch = env_buffer_.sample_windows(n_env, k, batch_rng_);
    if (have_model && n_env < c_.batch_size)
      batch = concat(batch, model_buffer_.sample_windows(c_.batch_size - n_env, k, batch_rng_));
    critic_loss_sum_ += learner_.critic_step(batch, model_.get(), critic_rng_);
    ++critic_count_;
  }

  void actor_update() {
    actor::ActorStepResult r;
    if (c_.variant == "sac-mve-mpi" && model_buffer_.size() > 0) {
      const Index n_env = static_cast<Index>(std::llround(c_.real_ratio * static_cast<double>(c_.batch_size)));
      const auto real = env_buffer_.sample_states(n_env, batch_rng_);
      const auto fake = model_buffer_.sample_states(c_.batch_size - n_env, batch_rng_);
      if (real.obs.rows() > 0) actor_loss_sum_ += learner_.actor_step(real, model_.get(), actor_rng_).loss, ++actor_count_;
      if (fake.obs.rows() > 0) actor_loss_sum_ += learner_.actor_step(fake, model_.get(), actor_rng_).loss, ++actor_count_;
      return;
    }
    r = learner_.actor_step(env_buffer_.sample_states(c_.batch_size, batch_rng_), model_.get(), actor_rng_);
    actor_loss_sum_ += r.loss;
    ++actor_count_;
  }

  bool maybe_eval() {
    if (result_.env_steps % c_.eval_interval != 0) return false;
    MetricsRow row;
    row.env_step = result_.env_steps;
    row.episodic_return = evaluate_policy_return(*eval_env_, learner_.actor(), c_.eval_episodes, eval_rng_);
    row.critic_loss = critic_count_ ? critic_loss_sum_ / static_cast<double>(critic_count_) : 0.0;
    row.actor_loss = actor_count_ ? actor_loss_sum_ / static_cast<double>(actor_count_) : 0.0;
    row.model_holdout_nll = last_nll_;
    row.alpha = learner_.alpha();
    row.rollout_length = static_cast<long>(rollout_length());
    if (c_.wall_clock)
      row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    critic_loss_sum_ = actor_loss_sum_ = 0.0;
    critic_count_ = actor_count_ = 0;
    result_.metrics.push_back(row);
    if (c_.stop_return && row.episodic_return >= *c_.stop_return) {
      result_.stopped_early = true;
      result_.steps_to_stop = row.env_step;
      return true;
    }
    return false;
  }

  ad::Checkpoint checkpoint() const {
    ad::Checkpoint ck;
    std::istringstream lines(to_text(c_));
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) ck.meta["config." + line.substr(0, eq)] = line.substr(eq + 3);
    }
    ck.meta["env_steps"] = std::to_string(result_.env_steps);
    ck.put_store("actor.", learner_.actor().params());
    ck.put_store("critic.online.", learner_.critic().online());
    ck.put_store("critic.target.", learner_.critic().target());
    ck.put_store("alpha.", learner_.temperature().params());
    if (model_) model_->save(ck, "model.");
    return ck;
  }

  TrainerConfig c_;
  std::unique_ptr<env::Environment> env_, eval_env_;
  Rng init_, reset_, noise_, explore_, model_rng_, rollout_rng_, critic_rng_, actor_rng_, eval_rng_, batch_rng_;
  Learner learner_;
  std::unique_ptr<model::EnsembleModel> model_;
  SegmentBuffer env_buffer_, model_buffer_;
  RunResult result_;
  double critic_loss_sum_ = 0.0, actor_loss_sum_ = 0.0, last_nll_ = 0.0;
  long critic_count_ = 0, actor_count_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows)
    out << r.env_step << ',' << show(r.episodic_return) << ',' << show(r.critic_loss) << ',' << show(r.actor_loss) << ','
        << show(r.model_holdout_nll) << ',' << show(r.alpha) << ',' << r.rollout_length << ',' << show(r.wall_clock)
        << '\n';
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream ss;
  write_metrics_csv(ss, rows);
  return ss.str();
}

double evaluate_policy_return(const env::Environment& env, const actor::Actor& actor, Index episodes, Rng& rng) {
  std::vector<std::unique_ptr<env::Environment>> envs;
  Matrix obs(episodes, env.spec().obs_dim);
  for (Index e = 0; e < episodes; ++e) {
    envs.push_back(env.clone());
    obs.row(e) = envs.back()->reset(rng).transpose();
  }
  Vector total = Vector::Zero(episodes);
  Rng unused(0);
  bool running = true;
  while (running) {
    running = false;
    const Matrix act = actor.act(obs, unused, true);
    for (Index e = 0; e < episodes; ++e) {
      auto& ev = *envs[static_cast<std::size_t>(e)];
      if (ev.done()) continue;
      const auto r = ev.step(act.row(e).transpose(), rng);
      total(e) += r.reward;
      obs.row(e) = r.observation.transpose();
      running = running || !r.done;
    }
  }
  return total.mean();
}

RunResult run_mppve(const TrainerConfig& config) {
  if (config.variant != "mppve") throw ConfigError("run_mppve: variant must be mppve");
  return Run(config).execute();
}

RunResult run_ablation(const TrainerConfig& config) {
  if (config.variant == "mppve") throw ConfigError("run_ablation: use run_mppve for variant mppve");
  return Run(config).execute();
}

RunResult run(const TrainerConfig& config) {
  RunResult r = config.variant == "mppve" ? run_mppve(config) : run_ablation(config);
  if (!config.metrics_path.empty()) {
    std::ofstream out(config.metrics_path);
    if (!out) throw ConfigError("cannot write metrics to '" + config.metrics_path + "'");
    write_metrics_csv(out, r.metrics);
  }
  if (!config.checkpoint_path.empty()) ad::save_checkpoint(config.checkpoint_path, r.checkpoint);
  return r;
}

Agent load_agent(const ad::Checkpoint& ckpt) {
  Agent agent;
  std::string text;
  for (const auto& [key, value] : ckpt.meta)
    if (key.rfind("config.", 0) == 0) text += key.substr(7) + " = " + value + "\n";
  if (text.empty()) throw ConfigError("checkpoint: no config metadata");
  agent.config = parse_config(text);
  agent.env = env::make_env(agent.config.env);
  Rng init(0);
  const Index obs = agent.env->spec().obs_dim, act = agent.env->spec().act_dim;
  agent.learner = std::make_unique<Learner>(obs, act, agent.config, init);
  ckpt.load_store("actor.", agent.learner->actor().params());
  ckpt.load_store("critic.online.", agent.learner->critic().online());
  ckpt.load_store("critic.target.", agent.learner->critic().target());
  if (agent.config.uses_model() && ckpt.has("model.elites")) {
    agent.model = std::make_unique<model::EnsembleModel>(
        obs, act, model::EnsembleConfig{agent.config.ensemble_members, agent.config.ensemble_elites, agent.config.model_hidden},
        init);
    agent.model->load(ckpt, "model.");
  }
  return agent;
}

}  // namespace planval::trainer
