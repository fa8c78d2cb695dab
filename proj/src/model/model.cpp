#include "planval/model/model.hpp"

namespace planval::model {

void TransitionBatch::validate() const {
  const Index n = s.rows();
  if (a.rows() != n || r.size() != n || s_next.rows() != n || static_cast<Index>(done.size()) != n)
    throw ShapeError("TransitionBatch: fields have different lengths");
  if (s_next.cols() != s.cols()) throw ShapeError("TransitionBatch: s and s_next widths differ");
  if (!s.allFinite() || !a.allFinite() || !r.allFinite() || !s_next.allFinite())
    throw NumericError("TransitionBatch: non-finite entry");
}

TransitionBatch TransitionBatch::rows(const std::vector<Index>& idx) const {
  TransitionBatch out;
  out.s = s(idx, Eigen::all);
  out.a = a(idx, Eigen::all);
  out.r = r(idx);
  out.s_next = s_next(idx, Eigen::all);
  out.done.reserve(idx.size());
  for (Index i : idx) out.done.push_back(done[static_cast<std::size_t>(i)]);
  return out;
}

StepNoise DynamicsModel::draw_with_members(Index n, const std::vector<Index>& choices, Index perturb_cols,
                                           Rng& rng) const {
  StepNoise noise;
  noise.members.resize(static_cast<std::size_t>(n));
  for (auto& m : noise.members) m = choices[static_cast<std::size_t>(uniform_index(static_cast<Index>(choices.size()), rng))];
  noise.normal = standard_normal(n, obs_dim() + 1, rng);
  noise.uniform.resize(n);
  for (Index i = 0; i < n; ++i) noise.uniform(i) = uniform01(rng);
  if (perturb_cols > 0) noise.perturb = standard_normal(n, perturb_cols, rng);
  return noise;
}

StepNoise DynamicsModel::draw_noise(Index n, Rng& rng) const { return draw_with_members(n, {0}, 0, rng); }

StepPrediction model_step(const DynamicsModel& model, const Matrix& obs, const Matrix& act, Rng& rng, StepMode mode) {
  if (!model.ready()) throw StateError("model_step: model has not been trained");
  if (obs.rows() != act.rows() || obs.cols() != model.obs_dim() || act.cols() != model.act_dim())
    throw ShapeError("model_step: observation/action shapes do not match the model");
  const StepNoise noise = model.draw_noise(obs.rows(), rng);
  ad::Tape tape;
  const ModelOutput out = model.step(tape, tape.constant(obs), tape.constant(act), noise, mode);
  return {out.next_obs.value(), out.reward.value().col(0)};
}

BranchedRollouts branched_rollout(const DynamicsModel& model, const PolicyFn& policy, const Matrix& start_pool,
                                  Index n_starts, Index length, Rng& rng, StepMode mode) {
  if (length < 1) throw PreconditionError("branched_rollout: length must be >= 1");
  if (start_pool.rows() == 0) throw PreconditionError("branched_rollout: empty start pool");
  BranchedRollouts out;
  out.start_indices.resize(static_cast<std::size_t>(n_starts));
  for (auto& i : out.start_indices) i = uniform_index(start_pool.rows(), rng);
  out.states.push_back(start_pool(out.start_indices, Eigen::all));
  for (Index t = 0; t < length; ++t) {
    Matrix act = policy(out.states.back(), rng);
    StepPrediction next = model_step(model, out.states.back(), act, rng, mode);
    out.actions.push_back(std::move(act));
    out.states.push_back(std::move(next.next_obs));
    out.rewards.push_back(std::move(next.reward));
  }
  return out;
}

}  // namespace planval::model
