#pragma once

#include "planval/ad/tape.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace planval::model {

/// Rows are transitions.
struct TransitionBatch {
  Matrix s;
  Matrix a;
  Vector r;
  Matrix s_next;
  std::vector<bool> done;

  Index size() const { return s.rows(); }
  /// Equal lengths and finite values; ShapeError / NumericError otherwise.
  void validate() const;
  TransitionBatch rows(const std::vector<Index>& idx) const;
};

enum class StepMode { Sample, Mean };

/// Everything random about one batched model step, drawn up front so steps can be replayed.
struct StepNoise {
  std::vector<Index> members;  // ensemble member per row
  Matrix normal;               // reparameterization noise, n x (obs + 1)
  Vector uniform;              // one draw per row for discrete successors
  Matrix perturb;              // extra observation noise for perturbed models, n x obs (may be empty)

  Index rows() const { return static_cast<Index>(members.size()); }
};

struct ModelOutput {
  ad::Var next_obs;  // n x obs
  ad::Var reward;    // n x 1
};

/// Predictive model p(s', r | s, a). Steps are recorded on a tape so that gradients can flow through
/// the predicted state into whatever produced `obs` and `act`; model parameters are bound frozen.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual Index obs_dim() const = 0;
  virtual Index act_dim() const = 0;
  /// False until the model can be stepped (an ensemble needs training first).
  virtual bool ready() const = 0;
  /// Draws member choices and noise for `n` rows. Consumes the same amount of randomness in every mode.
  virtual StepNoise draw_noise(Index n, Rng& rng) const;
  virtual ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const = 0;
  virtual std::unique_ptr<DynamicsModel> clone() const = 0;

 protected:
  /// Default draw: members uniform over `choices`, standard normals row by row, then uniforms.
  StepNoise draw_with_members(Index n, const std::vector<Index>& choices, Index perturb_cols, Rng& rng) const;
};

struct StepPrediction {
  Matrix next_obs;
  Vector reward;
};

/// Numeric convenience around DynamicsModel::step. Raises StateError if the model is not ready.
StepPrediction model_step(const DynamicsModel& model, const Matrix& obs, const Matrix& act, Rng& rng,
                          StepMode mode = StepMode::Sample);

/// Actions for a batch of observations; the policy draws its own noise from `rng`.
using PolicyFn = std::function<Matrix(const Matrix& obs, Rng& rng)>;

/// Branched rollouts from states drawn uniformly out of `start_pool`. Entry t of each vector is step t.
struct BranchedRollouts {
  std::vector<Index> start_indices;
  std::vector<Matrix> states;   // length + 1 matrices, n_starts x obs
  std::vector<Matrix> actions;  // length matrices, n_starts x act
  std::vector<Vector> rewards;  // length vectors

  Index length() const { return static_cast<Index>(actions.size()); }
  Index count() const { return static_cast<Index>(start_indices.size()); }
};

BranchedRollouts branched_rollout(const DynamicsModel& model, const PolicyFn& policy, const Matrix& start_pool,
                                  Index n_starts, Index length, Rng& rng, StepMode mode = StepMode::Sample);

}  // namespace planval::model
