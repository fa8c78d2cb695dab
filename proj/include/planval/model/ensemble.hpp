#pragma once

#include "planval/ad/adam.hpp"
#include "planval/ad/checkpoint.hpp"
#include "planval/ad/nn.hpp"
#include "planval/model/model.hpp"

namespace planval::model {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 0.5;
inline constexpr double kLogVarBoundWeight = 0.01;

/// Affine standardization of the columns of a data matrix.
struct Normalizer {
  RowVector mean;
  RowVector std;

  /// Column means and standard deviations; a standard deviation below 1e-6 is replaced by 1.
  static Normalizer fit(const Matrix& x);
  static Normalizer identity(Index width);
  Matrix normalize(const Matrix& x) const;
  Matrix denormalize(const Matrix& x) const;
  Index width() const { return mean.size(); }
};

struct EnsembleConfig {
  Index members = 5;
  Index elites = 3;
  std::vector<Index> hidden{64, 64};
};

/// Ensemble of Gaussian MLPs over (delta s, r). Each member owns its own parameter store with entries
/// `net.*`, `max_logvar` and `min_logvar`; log-variances are soft-bounded by the learnable rows and then
/// hard-clamped to [kLogVarMin, kLogVarMax].
class EnsembleModel final : public DynamicsModel {
 public:
  EnsembleModel(Index obs_dim, Index act_dim, EnsembleConfig config, Rng& rng);

  Index obs_dim() const override { return obs_dim_; }
  Index act_dim() const override { return act_dim_; }
  bool ready() const override { return !elites_.empty(); }
  StepNoise draw_noise(Index n, Rng& rng) const override;
  ModelOutput step(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode) const override;
  std::unique_ptr<DynamicsModel> clone() const override { return std::make_unique<EnsembleModel>(*this); }

  /// step() with member `m` read from `store` (same layout) and bound trainable; other members stay frozen.
  ModelOutput step_with_member(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode,
                               Index m, const ad::ParamStore& store) const;

  const EnsembleConfig& config() const { return config_; }
  Index target_dim() const { return obs_dim_ + 1; }
  Index n_members() const { return static_cast<Index>(members_.size()); }
  const ad::ParamStore& member(Index i) const { return members_[static_cast<std::size_t>(i)]; }
  ad::ParamStore& member(Index i) { return members_[static_cast<std::size_t>(i)]; }
  const ad::Mlp& net() const { return net_; }

  const std::vector<Index>& elites() const { return elites_; }
  void set_elites(std::vector<Index> elites);
  const Normalizer& input_norm() const { return in_norm_; }
  const Normalizer& target_norm() const { return out_norm_; }
  void set_normalizers(Normalizer input, Normalizer target);

  /// Normalized mean and log-variance of member `m` for normalized inputs, both n x target_dim.
  std::pair<ad::Var, ad::Var> member_forward(ad::Tape& tape, Index m, ad::Var normalized_input, bool trainable) const;

  void save(ad::Checkpoint& ckpt, const std::string& prefix) const;
  void load(const ad::Checkpoint& ckpt, const std::string& prefix);

 private:
  ModelOutput step_impl(ad::Tape& tape, ad::Var obs, ad::Var act, const StepNoise& noise, StepMode mode,
                        Index override_member, const ad::ParamStore* override_store) const;

  Index obs_dim_, act_dim_;
  EnsembleConfig config_;
  ad::Mlp net_;
  std::vector<ad::ParamStore> members_;
  std::vector<Index> elites_;
  Normalizer in_norm_, out_norm_;
};

/// Mean over rows of sum_d 0.5 ((mean - target)^2 exp(-logvar) + logvar + ln 2 pi), 1x1.
ad::Var gaussian_nll(ad::Var mean, ad::Var logvar, const Matrix& target);

/// Normalized inputs (s, a) and targets (s' - s, r) of a batch under the model's normalizers.
std::pair<Matrix, Matrix> model_io(const EnsembleModel& model, const TransitionBatch& batch);

/// NLL of member `m` on normalized data plus the log-variance bound regularizer, 1x1.
/// Binds member `m` from `store` (which must share its layout), trainable.
ad::Var member_loss(ad::Tape& tape, const EnsembleModel& model, Index m, const ad::ParamStore& store,
                    const Matrix& inputs, const Matrix& targets);

/// Mean over members of the member losses. Raises NumericError on a non-finite value.
double model_nll(const EnsembleModel& model, const TransitionBatch& batch);

struct ModelTrainConfig {
  double holdout_fraction = 0.2;
  int max_epochs = 50;
  int patience = 5;
  Index batch_size = 256;
  /// Caps the minibatch updates per member per epoch (0 = a full pass).
  Index max_updates_per_epoch = 0;
  ad::AdamConfig adam{1e-3};
};

struct ModelTrainReport {
  std::vector<double> holdout_nll;  // mean over members, entry 0 before any update
  std::vector<double> member_holdout;
  std::vector<int> member_best_epoch;
  std::vector<Index> elites;
  int epochs_run = 0;
};

/// Bootstrapped member training with per-member early stopping on holdout NLL; each member is restored to its
/// best epoch and the elites are the members with the lowest holdout NLL (ties by index). Normalizers are
/// refit on the training split. Raises CapacityError when the data has fewer than 10 batches.
ModelTrainReport train_model(EnsembleModel& model, const TransitionBatch& data, const ModelTrainConfig& config, Rng& rng);

}  // namespace planval::model
