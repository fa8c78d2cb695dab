#include "planval/critic/critic.hpp"

#include <cmath>

namespace planval::critic {

using ad::Tape;
using ad::Var;

void SegmentBatch::normalize() {
  const Index n = s0.rows();
  if (actions.rows() != n || rewards.rows() != n || s_k.rows() != n || static_cast<Index>(done_within.size()) != n)
    throw ShapeError("SegmentBatch: fields have different lengths");
  if (s_k.cols() != s0.cols() || rewards.cols() < 1 || actions.cols() % rewards.cols() != 0)
    throw ShapeError("SegmentBatch: inconsistent widths");
  if (!s0.allFinite() || !actions.allFinite() || !rewards.allFinite() || !s_k.allFinite())
    throw NumericError("SegmentBatch: non-finite entry");
  for (Index i = 0; i < n; ++i) {
    const int j = done_within[static_cast<std::size_t>(i)];
    if (j < -1 || j >= rewards.cols()) throw PreconditionError("SegmentBatch: done_within out of range");
    if (j >= 0)
      for (Index m = j + 1; m < rewards.cols(); ++m) rewards(i, m) = 0.0;
  }
}

void PlanValue::check_inputs(Var obs, Var plan) const {
  if (obs.cols() != obs_dim() || plan.cols() != k() * act_dim() || obs.rows() != plan.rows())
    throw ShapeError("plan value: input shapes (" + std::to_string(obs.rows()) + "x" + std::to_string(obs.cols()) +
                     ", " + std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()) + ") do not fit k=" +
                     std::to_string(k()));
}

PlanCritic::PlanCritic(Index obs_dim, Index act_dim, CriticConfig config, Rng& rng)
    : obs_dim_(obs_dim), act_dim_(act_dim), config_(std::move(config)) {
  if (config_.k < 1) throw PreconditionError("PlanCritic: k must be >= 1");
  if (!(config_.polyak > 0.0 && config_.polyak <= 1.0)) throw PreconditionError("PlanCritic: polyak rate outside (0, 1]");
  ad::MlpSpec spec;
  spec.sizes.push_back(obs_dim + config_.k * act_dim);
  for (Index h : config_.hidden) spec.sizes.push_back(h);
  spec.sizes.push_back(1);
  const int n_heads = config_.twin ? 2 : 1;
  for (int h = 0; h < n_heads; ++h) nets_.push_back(ad::add_mlp(online_, "q" + std::to_string(h), spec, rng));
  target_ = online_;
}

std::vector<Var> PlanCritic::heads(Tape& tape, const ad::ParamStore& store, Var obs, Var plan, bool trainable) const {
  check_inputs(obs, plan);
  const Var input = ad::concat_cols({obs, plan});
  std::vector<Var> out;
  for (const auto& net : nets_) out.push_back(ad::mlp_forward(tape, store, net, input, trainable));
  return out;
}

Var PlanCritic::evaluate(Tape& tape, Var obs, Var plan, bool target) const {
  count(obs.rows());
  const auto hs = heads(tape, target ? target_ : online_, obs, plan, false);
  return hs.size() == 1 ? hs[0] : ad::minimum(hs[0], hs[1]);
}

TabularPlanValue::TabularPlanValue(tabular::PlanValueTable<double> table, Index n_states)
    : table_(std::move(table)), n_states_(n_states) {
  if (table_.n_states() != n_states) throw ShapeError("TabularPlanValue: table rows differ from the state count");
}

Var TabularPlanValue::evaluate(Tape& tape, Var obs, Var plan, bool) const {
  check_inputs(obs, plan);
  count(obs.rows());
  Matrix out(obs.rows(), 1);
  std::vector<Index> acts(static_cast<std::size_t>(table_.k));
  for (Index i = 0; i < obs.rows(); ++i) {
    Index s = 0;
    obs.value().row(i).maxCoeff(&s);
    for (int m = 0; m < table_.k; ++m)
      acts[static_cast<std::size_t>(m)] = env::action_bin(plan.value()(i, m), table_.n_actions);
    out(i, 0) = table_(s, acts);
  }
  return tape.constant(std::move(out));
}

Vector td_target(const SegmentBatch& batch, const PlanValue& critic, const actor::Actor& actor,
                 const model::DynamicsModel* model, const TargetOptions& options, Rng& rng) {
  const Index n = batch.size();
  const Index k = batch.k();
  if (k != critic.k()) throw ShapeError("td_target: segment length differs from the critic's k");
  Tape tape;
  const actor::PlanNoise noise = actor::draw_plan_noise(actor, model, n, k, rng);
  const auto roll = actor::plan(tape, actor, actor.params(), model, tape.constant(batch.s_k), noise, false, options.mode);
  const Matrix q = critic.evaluate(tape, roll.start, roll.plan, true).value();
  const Matrix& lp = roll.plan_log_prob.value();
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const int j = batch.done_within[static_cast<std::size_t>(i)];
    const Index last = j >= 0 ? j : k - 1;
    double ret = 0.0, g = 1.0;
    for (Index m = 0; m <= last; ++m) {
      ret += g * batch.rewards(i, m);
      g *= options.gamma;
    }
    if (j < 0) {
      double gk = 1.0;
      for (Index m = 0; m < k; ++m) gk *= options.gamma;
      const double boot = options.soft ? q(i, 0) - options.alpha * lp(i, 0) : q(i, 0);
      ret += gk * boot;
    }
    y(i) = ret;
  }
  if (!y.allFinite()) throw NumericError("td_target: non-finite target");
  return y;
}

Var critic_loss(Tape& tape, const PlanCritic& critic, const ad::ParamStore& store, const SegmentBatch& batch,
                const Vector& targets) {
  if (targets.size() != batch.size()) throw ShapeError("critic_loss: targets and batch differ in length");
  const auto hs = critic.heads(tape, store, tape.constant(batch.s0), tape.constant(batch.actions), true);
  const Var y = tape.constant(targets);
  Var loss = 0.5 * ad::mean(ad::square(hs[0] - y));
  for (std::size_t h = 1; h < hs.size(); ++h) loss = loss + 0.5 * ad::mean(ad::square(hs[h] - y));
  return loss;
}

double critic_update(PlanCritic& critic, ad::Adam& optimizer, const SegmentBatch& batch, const Vector& targets) {
  Tape tape;
  const Var loss = critic_loss(tape, critic, critic.online(), batch, targets);
  if (!std::isfinite(loss.scalar())) throw NumericError("critic_update: non-finite loss");
  tape.backward(loss);
  optimizer.step(critic.online(), tape.gradients(critic.online()));
  return loss.scalar();
}

}  // namespace planval::critic
