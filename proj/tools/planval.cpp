#include "planval/analysis/analysis.hpp"
#include "planval/env/tabular_env.hpp"
#include "planval/model/stubs.hpp"
#include "planval/runtime.hpp"
#include "planval/tabular/io.hpp"
#include "planval/tabular/ppi.hpp"
#include "planval/trainer/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace planval;

namespace {

tabular::TabularMDP<double> resolve_mdp(const std::string& spec) {
  if (std::filesystem::exists(spec)) return tabular::load_mdp(spec);
  auto env = env::make_env(spec);
  const auto* tab = dynamic_cast<const env::TabularEnv*>(env.get());
  if (!tab) throw ConfigError("'" + spec + "' is not a tabular environment");
  return tab->mdp();
}

int cmd_train(const std::string& config_path, const std::string& variant, const std::optional<std::uint64_t>& seed) {
  trainer::TrainerConfig config = trainer::load_config(config_path);
  if (!variant.empty()) trainer::set_option(config, "variant", variant);
  if (seed) config.seed = *seed;
  trainer::validate(config);
  const auto result = trainer::run(config);
  if (config.metrics_path.empty()) trainer::write_metrics_csv(std::cout, result.metrics);
  return 0;
}

int cmd_ppi(const std::string& mdp_spec, int k, bool soft, double alpha) {
  const auto mdp = resolve_mdp(mdp_spec);
  const auto result = tabular::planning_policy_iteration<double>(mdp, k, soft, alpha, 1e-12);
  std::cout << "state,value";
  for (Index a = 0; a < mdp.n_actions(); ++a) std::cout << ",pi_" << a;
  std::cout << '\n';
  const auto& v = result.trace.back().state_values;
  for (Index s = 0; s < mdp.n_states(); ++s) {
    std::cout << s << ',' << tabular::detail::format17(v(s));
    for (Index a = 0; a < mdp.n_actions(); ++a) std::cout << ',' << tabular::detail::format17(result.policy.probs()(s, a));
    std::cout << '\n';
  }
  return 0;
}

std::string num(double x) { return tabular::detail::format17(x); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

trainer::Agent agent_for(const std::string& checkpoint, int k) {
  trainer::Agent agent = trainer::load_agent(ad::load_checkpoint(checkpoint));
  if (agent.learner->critic().k() != k)
    throw ConfigError("checkpoint critic has k=" + std::to_string(agent.learner->critic().k()) + ", requested " +
                      std::to_string(k));
  return agent;
}

int cmd_grad_study(const std::string& checkpoint, int k, double sigma, const std::string& out_path, Index n_states,
                   std::uint64_t seed) {
  trainer::Agent agent = trainer::load_agent(ad::load_checkpoint(checkpoint));
  if (!agent.model) throw ConfigError("grad-study needs a checkpoint with a dynamics model");
  Rng rng = derive_rng(seed, 1);
  analysis::FrozenCriticOptions fo;
  fo.k = k;
  fo.hidden = agent.config.hidden;
  fo.target = agent.learner->target_options();
  const auto& pi = agent.learner->actor();
  const auto plan_fit = analysis::fit_frozen_critic(*agent.env, pi, agent.model.get(), fo, rng);
  fo.k = 1;
  const auto step_fit = analysis::fit_frozen_critic(*agent.env, pi, nullptr, fo, rng);
  const model::PerturbedModel injected(*agent.model, sigma);
  analysis::GradStudyOptions go;
  go.k = k;
  go.soft = fo.target.soft;
  go.alpha = fo.target.alpha;
  go.plan_critic_residual = plan_fit.residual;
  go.step_critic_residual = step_fit.residual;
  const Matrix states = analysis::on_policy_states(*agent.env, pi, n_states, rng);
  const auto records =
      analysis::gradient_direction_study(*agent.env, injected, pi, plan_fit.critic, step_fit.critic, states, go, rng);
  auto out = open_out(out_path);
  out << "state_id,rollout_error,ncs_mppve,ncs_mbpo\n";
  for (const auto& r : records)
    out << r.state_id << ',' << num(r.rollout_error) << ',' << num(r.ncs_mppve) << ',' << num(r.ncs_mbpo) << '\n';
  return 0;
}

int cmd_bias_study(const std::string& checkpoint, int k, Index n_mc, const std::string& out_path, Index n_states,
                   std::uint64_t seed) {
  trainer::Agent agent = agent_for(checkpoint, k);
  Rng rng = derive_rng(seed, 2);
  analysis::MonteCarloOptions mo;
  mo.n_rollouts = n_mc;
  mo.gamma = agent.config.gamma;
  mo.soft = agent.config.soft;
  mo.alpha = agent.learner->target_options().alpha;
  const auto report = analysis::value_bias_study(*agent.env, agent.learner->actor(), agent.learner->critic(), n_states,
                                                 mo, rng);
  auto out = open_out(out_path);
  out << "sample,q_hat,q_mc,q_mc_se,normalized_bias\n";
  for (std::size_t i = 0; i < report.samples.size(); ++i) {
    const auto& s = report.samples[i];
    out << i << ',' << num(s.q_hat) << ',' << num(s.q_mc) << ',' << num(s.q_mc_se) << ','
        << num((s.q_hat - s.q_mc) / report.denominator) << '\n';
  }
  std::cout << "k,mean_bias,std_bias\n" << k << ',' << num(report.mean_bias) << ',' << num(report.std_bias) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"planval: plan value training and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, variant;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "run one training job");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--variant", variant, "mppve | sac-mppve | sac-mve | sac-mve-mpi | sac");
  train->add_option("--seed", seed, "overrides the config seed");

  std::string mdp_spec;
  int k = 1;
  bool soft = false;
  double alpha = 0.0;
  auto* ppi = app.add_subcommand("ppi", "planning policy iteration on a finite MDP");
  ppi->add_option("--mdp", mdp_spec, "MDP file or selector")->required();
  ppi->add_option("--k", k, "plan length")->required();
  ppi->add_flag("--soft", soft, "maximum-entropy variant");
  ppi->add_option("--alpha", alpha, "temperature");

  std::string checkpoint, out_path;
  double sigma = 0.0;
  Index n_states = 200, n_mc = 100;
  std::uint64_t study_seed = 0;
  auto* grad = app.add_subcommand("grad-study", "policy-gradient direction under injected model error");
  grad->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  grad->add_option("--k", k, "plan length")->required();
  grad->add_option("--inject", sigma, "std of the noise added to the model's mean prediction")->required();
  grad->add_option("--out", out_path, "output CSV")->required();
  grad->add_option("--states", n_states, "number of start states");
  grad->add_option("--seed", study_seed, "random seed");

  auto* bias = app.add_subcommand("bias-study", "normalized bias of the plan value against Monte Carlo returns");
  bias->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  bias->add_option("--k", k, "plan length")->required();
  bias->add_option("--mc", n_mc, "Monte-Carlo rollouts per sample")->required();
  bias->add_option("--out", out_path, "output CSV")->required();
  bias->add_option("--states", n_states, "number of on-policy states");
  bias->add_option("--seed", study_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config_path, variant, seed);
    if (*ppi) return cmd_ppi(mdp_spec, k, soft, alpha);
    if (*grad) return cmd_grad_study(checkpoint, k, sigma, out_path, n_states, study_seed);
    if (*bias) return cmd_bias_study(checkpoint, k, n_mc, out_path, n_states, study_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
