#include "planval/analysis/analysis.hpp"

#include "planval/model/stubs.hpp"
#include "planval/trainer/buffer.hpp"

#include <algorithm>
#include <cmath>

namespace planval::analysis {

using ad::Tape;
using ad::Var;

double normalized_cosine(const Vector& g, const Vector& h) {
  if (g.size() != h.size()) throw ShapeError("normalized_cosine: length mismatch");
  const double ng = g.norm(), nh = h.norm();
  if (ng == 0.0 || nh == 0.0) throw DegenerateInput("normalized_cosine: zero vector");
  const double c = std::clamp(g.dot(h) / (ng * nh), -1.0, 1.0);
  return 0.5 * (1.0 + c);
}

Vector actor_gradient(const actor::Actor& actor, const std::function<Var(Tape&)>& loss) {
  Tape tape;
  const Var out = loss(tape);
  tape.backward(out);
  const ad::Gradients grads = tape.gradients(actor.params());
  Index total = 0;
  for (const auto& g : grads) total += g.size();
  Vector flat(total);
  Index at = 0;
  for (const auto& g : grads) {
    flat.segment(at, g.size()) = g.reshaped();
    at += g.size();
  }
  return flat;
}

FrozenCriticFit fit_frozen_critic(const env::Environment& env, const actor::Actor& actor,
                                  const model::DynamicsModel* model, const FrozenCriticOptions& options, Rng& rng) {
  const Index obs = env.spec().obs_dim, act = env.spec().act_dim;
  trainer::SegmentBuffer buf(options.data_steps, obs, act, actor::DataSource::Env);
  auto e = env.clone();
  e->reset(rng);
  for (Index t = 0; t < options.data_steps; ++t) {
    const Vector s = e->observation();
    const Vector a = actor.act(s.transpose(), rng).row(0).transpose();
    const auto r = e->step(a, rng);
    buf.add(s, a, r.reward, r.observation, r.terminal, r.done);
    if (r.done) e->reset(rng);
  }
  critic::CriticConfig cc;
  cc.k = options.k;
  cc.hidden = options.hidden;
  cc.polyak = options.polyak;
  FrozenCriticFit fit{critic::PlanCritic(obs, act, cc, rng), 0.0};
  ad::Adam opt(fit.critic.online(), {options.lr});
  for (Index it = 0; it < options.iterations; ++it) {
    if (it == options.iterations / 2) opt.set_lr(options.lr * 0.2);
    const auto batch = buf.sample_windows(options.batch_size, options.k, rng);
    const Vector y = critic::td_target(batch, fit.critic, actor, model, options.target, rng);
    critic::critic_update(fit.critic, opt, batch, y);
    fit.critic.polyak_update();
  }
  const auto batch = buf.sample_windows(std::max<Index>(1024, options.batch_size), options.k, rng);
  Vector y = Vector::Zero(batch.s0.rows());
  for (Index d = 0; d < options.residual_draws; ++d)
    y += critic::td_target(batch, fit.critic, actor, model, options.target, rng) / static_cast<double>(options.residual_draws);
  Tape tape;
  const Vector q =
      fit.critic.evaluate(tape, tape.constant(batch.s0), tape.constant(batch.actions), false).value().col(0);
  const double sd = std::sqrt((y.array() - y.mean()).square().mean());
  if (!(sd > 0.0)) throw DegenerateInput("fit_frozen_critic: targets have no spread");
  fit.residual = std::sqrt((q - y).squaredNorm() / static_cast<double>(y.size())) / sd;
  return fit;
}

namespace {

actor::PlanNoise first_steps(const actor::PlanNoise& noise, Index k) {
  actor::PlanNoise out;
  out.policy.assign(noise.policy.begin(), noise.policy.begin() + k);
  out.model.assign(noise.model.begin(), noise.model.begin() + (k - 1));
  return out;
}

std::vector<Vector> rows_of(const std::vector<Var>& vars) {
  std::vector<Vector> out;
  for (const auto& v : vars) out.push_back(v.value().row(0).transpose());
  return out;
}

Vector single_step_gradient(const actor::Actor& actor, const critic::PlanValue& step_critic,
                            const std::vector<Vector>& states, const actor::PlanNoise& noise, bool soft, double alpha) {
  return actor_gradient(actor, [&](Tape& tape) {
    Var total;
    for (std::size_t i = 0; i < states.size(); ++i) {
      actor::PlanNoise one;
      one.policy.push_back(noise.policy[i]);
      const auto roll = actor::plan(tape, actor, actor.params(), nullptr, tape.constant(states[i].transpose()), one, true);
      const Var l = actor::actor_loss(tape, step_critic, roll, soft, alpha);
      total = i == 0 ? l : total + l;
    }
    return total * (1.0 / static_cast<double>(states.size()));
  });
}

}  // namespace

std::vector<GradStudyRecord> gradient_direction_study(const env::Environment& env, const model::DynamicsModel& model,
                                                      const actor::Actor& actor, const critic::PlanValue& plan_critic,
                                                      const critic::PlanValue& step_critic, const Matrix& states,
                                                      const GradStudyOptions& options, Rng& rng) {
  const Index k = options.k;
  if (k < 1) throw PreconditionError("gradient_direction_study: k must be positive");
  if (plan_critic.k() != k || step_critic.k() != 1)
    throw PreconditionError("gradient_direction_study: critics must have plan lengths k and 1");
  if (options.plan_critic_residual > options.residual_threshold ||
      options.step_critic_residual > options.residual_threshold)
    throw PreconditionError("gradient_direction_study: critics are not converged (residuals " +
                            std::to_string(options.plan_critic_residual) + ", " +
                            std::to_string(options.step_critic_residual) + ")");
  if (!model.ready()) throw PreconditionError("gradient_direction_study: model is not trained");
  const auto truth = model::true_model(env);

  std::vector<GradStudyRecord> records;
  for (Index i = 0; i < states.rows(); ++i) {
    const Vector s0 = states.row(i).transpose();
    const actor::PlanNoise fake_noise = actor::draw_plan_noise(actor, &model, 1, k + 1, rng);
    actor::PlanNoise real_noise = first_steps(fake_noise, k);
    for (auto& m : real_noise.model) m = truth->draw_noise(1, rng);

    std::vector<Vector> real_states, fake_states;
    std::vector<Vector> real_actions, fake_actions;
    const Vector g_plan_real = actor_gradient(actor, [&](Tape& tape) {
      const auto roll = actor::plan(tape, actor, actor.params(), truth.get(), tape.constant(s0.transpose()), real_noise,
                                    true, model::StepMode::Mean);
      real_states = rows_of(roll.states);
      real_actions = rows_of(roll.actions);
      return actor::actor_loss(tape, plan_critic, roll, options.soft, options.alpha);
    });
    Vector fake_last;
    const Vector g_plan_fake = actor_gradient(actor, [&](Tape& tape) {
      const auto roll = actor::plan(tape, actor, actor.params(), &model, tape.constant(s0.transpose()),
                                    first_steps(fake_noise, k), true, model::StepMode::Mean);
      fake_states = rows_of(roll.states);
      fake_actions = rows_of(roll.actions);
      const auto last = model.step(tape, roll.states.back(), roll.actions.back(), fake_noise.model[k - 1],
                                   model::StepMode::Mean);
      fake_last = last.next_obs.value().row(0).transpose();
      return actor::actor_loss(tape, plan_critic, roll, options.soft, options.alpha);
    });

    Rng env_noise = derive_rng(0, static_cast<std::uint64_t>(i));
    const env::Rollout real = env::oracle_rollout(env, {s0, false, 0}, real_actions, env_noise);

    GradStudyRecord rec;
    rec.state_id = i;
    double err = 0.0;
    for (Index t = 1; t <= k; ++t) {
      const Vector& fake = t < k ? fake_states[static_cast<std::size_t>(t)] : fake_last;
      err += (fake - real.states[static_cast<std::size_t>(t)]).norm();
    }
    rec.rollout_error = err / static_cast<double>(k);
    rec.ncs_mppve = normalized_cosine(g_plan_real, g_plan_fake);
    const std::vector<Vector> real_starts(real.states.begin(), real.states.begin() + k);
    rec.ncs_mbpo = normalized_cosine(single_step_gradient(actor, step_critic, real_starts, real_noise, options.soft, options.alpha),
                                     single_step_gradient(actor, step_critic, fake_states, real_noise, options.soft, options.alpha));
    records.push_back(rec);
  }
  return records;
}

std::vector<SevereBin> severe_error_ratio(const std::vector<GradStudyRecord>& records, const std::vector<double>& edges) {
  if (records.empty()) throw PreconditionError("severe_error_ratio: no records");
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw PreconditionError("severe_error_ratio: need at least two ascending edges");
  const std::size_t n_bins = edges.size() - 1;
  std::vector<SevereBin> bins(n_bins);
  std::vector<Index> bad_mppve(n_bins, 0), bad_mbpo(n_bins, 0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for (const auto& r : records) {
    if (r.rollout_error < edges.front() || r.rollout_error > edges.back()) continue;
    std::size_t b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), r.rollout_error) - edges.begin());
    b = std::min(b - 1, n_bins - 1);
    ++bins[b].count;
    bad_mppve[b] += r.ncs_mppve < 0.5;
    bad_mbpo[b] += r.ncs_mbpo < 0.5;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (bins[b].count == 0) continue;
    const double c = static_cast<double>(bins[b].count);
    bins[b].ratio_mppve = static_cast<double>(bad_mppve[b]) / c;
    bins[b].ratio_mbpo = static_cast<double>(bad_mbpo[b]) / c;
  }
  return bins;
}

Index mc_horizon(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw PreconditionError("mc_horizon: gamma must lie in (0, 1)");
  Index h = 0;
  double g = 1.0;
  while (g >= 1e-4) {
    g *= gamma;
    ++h;
  }
  return h;
}

namespace {

std::pair<Vector, double> sample_action(const actor::Actor& actor, const Vector& obs, Rng& rng) {
  Tape tape;
  const Matrix noise = standard_normal(1, actor.act_dim(), rng);
  const auto s = actor.sample(tape, tape.constant(obs.transpose()), noise, false);
  return {s.value.value().row(0).transpose(), s.log_prob.value()(0, 0)};
}

}  // namespace

MonteCarloEstimate mc_plan_value(const env::Environment& env, const Vector& state, const Matrix& plan,
                                 const actor::Actor& actor, const MonteCarloOptions& options, Rng& rng) {
  if (options.n_rollouts < 2) throw PreconditionError("mc_plan_value: need at least two rollouts");
  const Index horizon = options.horizon > 0 ? options.horizon : mc_horizon(options.gamma);
  Vector returns(options.n_rollouts);
  for (Index n = 0; n < options.n_rollouts; ++n) {
    auto e = env.clone();
    e->inject({state, false, 0});
    double ret = 0.0, disc = 1.0;
    for (Index t = 0; t < horizon; ++t) {
      Vector a;
      double logp = 0.0;
      if (t < plan.rows()) {
        a = plan.row(t).transpose();
      } else {
        std::tie(a, logp) = sample_action(actor, e->observation(), rng);
      }
      const auto r = e->step(a, rng);
      ret += disc * r.reward;
      if (options.soft && t >= plan.rows()) ret -= disc * options.alpha * logp;
      disc *= options.gamma;
      if (r.terminal) break;
      if (r.done) e->inject({r.observation, false, 0});
    }
    returns(n) = ret;
  }
  const double mean = returns.mean();
  const double var = (returns.array() - mean).square().sum() / static_cast<double>(returns.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(returns.size()))};
}

Matrix on_policy_states(const env::Environment& env, const actor::Actor& actor, Index n, Rng& rng) {
  if (n < 1) throw PreconditionError("on_policy_states: need at least one state");
  Matrix out(n, env.spec().obs_dim);
  auto e = env.clone();
  e->reset(rng);
  for (Index i = 0; i < n; ++i) {
    out.row(i) = e->observation().transpose();
    const Matrix a = actor.act(e->observation().transpose(), rng);
    if (e->step(a.row(0).transpose(), rng).done) e->reset(rng);
  }
  return out;
}

std::pair<double, double> normalized_bias(const Vector& q_hat, const Vector& q_ref) {
  if (q_hat.size() != q_ref.size() || q_ref.size() == 0) throw ShapeError("normalized_bias: size mismatch");
  const double denom = std::abs(q_ref.mean());
  if (denom == 0.0) throw DegenerateInput("normalized_bias: mean reference value is zero");
  const Vector b = (q_hat - q_ref) / denom;
  const double mean = b.mean();
  return {mean, std::sqrt((b.array() - mean).square().mean())};
}

ValueBiasReport value_bias_study(const env::Environment& env, const actor::Actor& actor,
                                 const critic::PlanValue& critic, Index n_states, const MonteCarloOptions& options,
                                 Rng& rng) {
  const Index k = critic.k(), act = actor.act_dim();
  const Matrix states = on_policy_states(env, actor, n_states, rng);
  ValueBiasReport report;
  Vector q_hat(n_states), q_mc(n_states);
  for (Index i = 0; i < n_states; ++i) {
    ValueBiasSample s;
    s.state = states.row(i).transpose();
    s.plan = Matrix::Zero(k, act);
    auto e = env.clone();
    e->inject({s.state, false, 0});
    for (Index t = 0; t < k; ++t) {
      s.plan.row(t) = actor.act(e->observation().transpose(), rng).row(0);
      const auto r = e->step(s.plan.row(t).transpose(), rng);
      if (r.terminal) break;
      if (r.done) e->inject({r.observation, false, 0});
    }
    Tape tape;
    const Matrix flat = s.plan.reshaped<Eigen::RowMajor>().transpose();
    s.q_hat = critic.evaluate(tape, tape.constant(s.state.transpose()), tape.constant(flat), false).value()(0, 0);
    const auto mc = mc_plan_value(env, s.state, s.plan, actor, options, rng);
    s.q_mc = mc.mean;
    s.q_mc_se = mc.standard_error;
    q_hat(i) = s.q_hat;
    q_mc(i) = s.q_mc;
    report.samples.push_back(std::move(s));
  }
  report.denominator = std::abs(q_mc.mean());
  std::tie(report.mean_bias, report.std_bias) = normalized_bias(q_hat, q_mc);
  return report;
}

}  // namespace planval::analysis
