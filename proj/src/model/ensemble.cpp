#include "planval/model/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace planval::model {

using ad::Tape;
using ad::Var;

Normalizer Normalizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw PreconditionError("Normalizer::fit: no rows");
  Normalizer n;
  n.mean = x.colwise().mean();
  const Matrix centred = x.rowwise() - n.mean;
  n.std = (centred.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
  for (Index c = 0; c < n.std.size(); ++c)
    if (!(n.std(c) >= 1e-6)) n.std(c) = 1.0;
  if (!n.mean.allFinite() || !n.std.allFinite()) throw NumericError("Normalizer::fit: non-finite statistics");
  return n;
}

Normalizer Normalizer::identity(Index width) { return {RowVector::Zero(width), RowVector::Ones(width)}; }

Matrix Normalizer::normalize(const Matrix& x) const {
  return (x.rowwise() - mean).array().rowwise() / std.array();
}

Matrix Normalizer::denormalize(const Matrix& x) const {
  return (x.array().rowwise() * std.array()).matrix().rowwise() + mean;
}

namespace {

std::pair<Var, Var> forward_store(Tape& tape, const ad::Mlp& net, const ad::ParamStore& store, Var xn,
                                  Index width, bool trainable) {
  const Var out = ad::mlp_forward(tape, store, net, xn, trainable);
  const Var mean = ad::slice_cols(out, 0, width);
  const Var raw = ad::slice_cols(out, width, width);
  const Var hi = tape.param(store, store.index_of("max_logvar"), trainable);
  const Var lo = tape.param(store, store.index_of("min_logvar"), trainable);
  const Var logvar = ad::clamp(ad::soft_lower(ad::soft_upper(raw, hi), lo), kLogVarMin, kLogVarMax);
  return {mean, logvar};
}

Matrix diagonal(const RowVector& d) { return d.transpose().asDiagonal(); }

}  // namespace

EnsembleModel::EnsembleModel(Index obs_dim, Index act_dim, EnsembleConfig config, Rng& rng)
    : obs_dim_(obs_dim), act_dim_(act_dim), config_(std::move(config)) {
  if (obs_dim < 1 || act_dim < 1) throw PreconditionError("EnsembleModel: empty observation or action");
  if (config_.members < 1 || config_.elites < 1 || config_.elites > config_.members)
    throw PreconditionError("EnsembleModel: need 1 <= elites <= members");
  ad::MlpSpec spec;
  spec.sizes.push_back(obs_dim + act_dim);
  for (Index h : config_.hidden) spec.sizes.push_back(h);
  spec.sizes.push_back(2 * target_dim());
  for (Index m = 0; m < config_.members; ++m) {
    ad::ParamStore store;
    net_ = ad::add_mlp(store, "net", spec, rng);
    store.add("max_logvar", Matrix::Constant(1, target_dim(), kLogVarMax));
    store.add("min_logvar", Matrix::Constant(1, target_dim(), kLogVarMin));
    members_.push_back(std::move(store));
  }
  in_norm_ = Normalizer::identity(obs_dim + act_dim);
  out_norm_ = Normalizer::identity(target_dim());
}

void EnsembleModel::set_elites(std::vector<Index> elites) {
  if (elites.empty()) throw PreconditionError("EnsembleModel: empty elite set");
  for (Index e : elites)
    if (e < 0 || e >= n_members()) throw PreconditionError("EnsembleModel: elite index out of range");
  elites_ = std::move(elites);
}

void EnsembleModel::set_normalizers(Normalizer input, Normalizer target) {
  if (input.width() != obs_dim_ + act_dim_ || target.width() != target_dim())
    throw ShapeError("EnsembleModel: normalizer width mismatch");
  in_norm_ = std::move(input);
  out_norm_ = std::move(target);
}

StepNoise EnsembleModel::draw_noise(Index n, Rng& rng) const {
  if (!ready()) throw StateError("EnsembleModel: no elites; train the model first");
  return draw_with_members(n, elites_, 0, rng);
}

std::pair<Var, Var> EnsembleModel::member_forward(Tape& tape, Index m, Var xn, bool trainable) const {
  return forward_store(tape, net_, member(m), xn, target_dim(), trainable);
}

ModelOutput EnsembleModel::step(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode mode) const {
  return step_impl(tape, obs, act, noise, mode, -1, nullptr);
}

ModelOutput EnsembleModel::step_with_member(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode mode,
                                            Index m, const ad::ParamStore& store) const {
  if (!store.same_layout(member(m))) throw ShapeError("step_with_member: store layout differs from the member");
  return step_impl(tape, obs, act, noise, mode, m, &store);
}

ModelOutput EnsembleModel::step_impl(Tape& tape, Var obs, Var act, const StepNoise& noise, StepMode mode,
                                     Index override_member, const ad::ParamStore* override_store) const {
  if (!ready()) throw StateError("EnsembleModel: no elites; train the model first");
  const Index n = obs.rows();
  if (noise.rows() != n || noise.normal.rows() != n || noise.normal.cols() != target_dim())
    throw ShapeError("EnsembleModel::step: noise does not match the batch");
  const Var x = ad::concat_cols({obs, act});
  const Var xn = ad::matmul(ad::add_row(x, tape.constant(-in_norm_.mean)), tape.constant(diagonal(in_norm_.std.cwiseInverse())));

  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(n_members()));
  for (Index i = 0; i < n; ++i) {
    const Index m = noise.members[static_cast<std::size_t>(i)];
    if (m < 0 || m >= n_members()) throw PreconditionError("EnsembleModel::step: member index out of range");
    groups[static_cast<std::size_t>(m)].push_back(i);
  }
  std::vector<Var> parts;
  std::vector<std::vector<Index>> row_sets;
  for (Index m = 0; m < n_members(); ++m) {
    const auto& rows = groups[static_cast<std::size_t>(m)];
    if (rows.empty()) continue;
    const bool all = static_cast<Index>(rows.size()) == n;
    const Var sub = all ? xn : ad::gather_rows(xn, rows);
    const bool over = m == override_member;
    auto [mean, logvar] = forward_store(tape, net_, over ? *override_store : member(m), sub, target_dim(), over);
    Var y = mean;
    if (mode == StepMode::Sample)
      y = mean + ad::exp(0.5 * logvar) * tape.constant(noise.normal(rows, Eigen::all));
    parts.push_back(y);
    row_sets.push_back(rows);
  }
  const Var yn = parts.size() == 1 && row_sets[0].size() == static_cast<std::size_t>(n)
                     ? parts[0]
                     : ad::assemble_rows(parts, row_sets, n);
  const Var y = ad::add_row(ad::matmul(yn, tape.constant(diagonal(out_norm_.std))), tape.constant(out_norm_.mean));
  return {obs + ad::slice_cols(y, 0, obs_dim_), ad::slice_cols(y, obs_dim_, 1)};
}

void EnsembleModel::save(ad::Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.meta[prefix + "obs_dim"] = std::to_string(obs_dim_);
  ckpt.meta[prefix + "act_dim"] = std::to_string(act_dim_);
  ckpt.meta[prefix + "members"] = std::to_string(config_.members);
  for (Index m = 0; m < n_members(); ++m) ckpt.put_store(prefix + "member" + std::to_string(m) + ".", member(m));
  ckpt.put(prefix + "in_mean", in_norm_.mean);
  ckpt.put(prefix + "in_std", in_norm_.std);
  ckpt.put(prefix + "out_mean", out_norm_.mean);
  ckpt.put(prefix + "out_std", out_norm_.std);
  Matrix e(1, static_cast<Index>(elites_.size()));
  for (std::size_t i = 0; i < elites_.size(); ++i) e(0, static_cast<Index>(i)) = static_cast<double>(elites_[i]);
  ckpt.put(prefix + "elites", e);
}

void EnsembleModel::load(const ad::Checkpoint& ckpt, const std::string& prefix) {
  for (Index m = 0; m < n_members(); ++m) ckpt.load_store(prefix + "member" + std::to_string(m) + ".", member(m));
  set_normalizers({ckpt.get(prefix + "in_mean"), ckpt.get(prefix + "in_std")},
                  {ckpt.get(prefix + "out_mean"), ckpt.get(prefix + "out_std")});
  const Matrix& e = ckpt.get(prefix + "elites");
  std::vector<Index> elites;
  for (Index i = 0; i < e.size(); ++i) elites.push_back(static_cast<Index>(e(i)));
  if (elites.empty()) {
    elites_.clear();
  } else {
    set_elites(std::move(elites));
  }
}

Var gaussian_nll(Var mean, Var logvar, const Matrix& target) {
  Tape& tape = *mean.tape;
  if (target.rows() != mean.rows() || target.cols() != mean.cols()) throw ShapeError("gaussian_nll: target shape");
  const Var diff = mean - tape.constant(target);
  const Var per = ad::square(diff) * ad::exp(-logvar) + logvar + std::log(2.0 * std::numbers::pi);
  return ad::sum(per) * (0.5 / static_cast<double>(target.rows()));
}

std::pair<Matrix, Matrix> model_io(const EnsembleModel& model, const TransitionBatch& batch) {
  Matrix x(batch.size(), model.obs_dim() + model.act_dim());
  x << batch.s, batch.a;
  Matrix y(batch.size(), model.target_dim());
  y << batch.s_next - batch.s, batch.r;
  return {model.input_norm().normalize(x), model.target_norm().normalize(y)};
}

Var member_loss(Tape& tape, const EnsembleModel& model, Index m, const ad::ParamStore& store, const Matrix& inputs,
                const Matrix& targets) {
  if (!store.same_layout(model.member(m))) throw ShapeError("member_loss: store layout differs from the member");
  auto [mean, logvar] = forward_store(tape, model.net(), store, tape.constant(inputs), model.target_dim(), true);
  const Var hi = tape.param(store, store.index_of("max_logvar"), true);
  const Var lo = tape.param(store, store.index_of("min_logvar"), true);
  return gaussian_nll(mean, logvar, targets) + kLogVarBoundWeight * (ad::sum(hi) - ad::sum(lo));
}

double model_nll(const EnsembleModel& model, const TransitionBatch& batch) {
  batch.validate();
  if (batch.size() == 0) throw PreconditionError("model_nll: empty batch");
  const auto [x, y] = model_io(model, batch);
  double total = 0.0;
  for (Index m = 0; m < model.n_members(); ++m) {
    Tape tape;
    total += member_loss(tape, model, m, model.member(m), x, y).scalar();
  }
  const double nll = total / static_cast<double>(model.n_members());
  if (!std::isfinite(nll)) throw NumericError("model_nll: non-finite loss");
  return nll;
}

namespace {

double holdout_nll(const EnsembleModel& model, Index m, const Matrix& x, const Matrix& y) {
  Tape tape;
  auto [mean, logvar] = model.member_forward(tape, m, tape.constant(x), false);
  return gaussian_nll(mean, logvar, y).scalar();
}

std::vector<Index> permutation(Index n, Rng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(uniform_index(i + 1, rng))]);
  return p;
}

}  // namespace

ModelTrainReport train_model(EnsembleModel& model, const TransitionBatch& data, const ModelTrainConfig& config, Rng& rng) {
  data.validate();
  const Index n = data.size();
  if (config.batch_size < 1) throw PreconditionError("train_model: batch size must be positive");
  if (n < 10 * config.batch_size)
    throw CapacityError("train_model: " + std::to_string(n) + " transitions, need at least " +
                        std::to_string(10 * config.batch_size));
  if (!(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0))
    throw PreconditionError("train_model: holdout fraction must lie in (0, 1)");

  const auto order = permutation(n, rng);
  const Index n_hold = std::max<Index>(1, static_cast<Index>(config.holdout_fraction * static_cast<double>(n)));
  const std::vector<Index> hold_idx(order.begin(), order.begin() + n_hold);
  const std::vector<Index> train_idx(order.begin() + n_hold, order.end());
  const TransitionBatch train = data.rows(train_idx);
  const TransitionBatch hold = data.rows(hold_idx);
  {
    Matrix x(train.size(), model.obs_dim() + model.act_dim());
    x << train.s, train.a;
    Matrix y(train.size(), model.target_dim());
    y << train.s_next - train.s, train.r;
    model.set_normalizers(Normalizer::fit(x), Normalizer::fit(y));
  }
  const auto [x_train, y_train] = model_io(model, train);
  const auto [x_hold, y_hold] = model_io(model, hold);
  const Index n_train = train.size();
  const Index members = model.n_members();

  std::vector<std::vector<Index>> boot(static_cast<std::size_t>(members));
  for (auto& b : boot) {
    b.resize(static_cast<std::size_t>(n_train));
    for (auto& i : b) i = uniform_index(n_train, rng);
  }
  std::vector<ad::Adam> opt;
  std::vector<ad::ParamStore> best_store;
  ModelTrainReport report;
  report.member_holdout.resize(static_cast<std::size_t>(members));
  report.member_best_epoch.assign(static_cast<std::size_t>(members), 0);
  std::vector<double> current(static_cast<std::size_t>(members));
  std::vector<int> since(static_cast<std::size_t>(members), 0);
  for (Index m = 0; m < members; ++m) {
    opt.emplace_back(model.member(m), config.adam);
    best_store.push_back(model.member(m));
    current[static_cast<std::size_t>(m)] = holdout_nll(model, m, x_hold, y_hold);
    report.member_holdout[static_cast<std::size_t>(m)] = current[static_cast<std::size_t>(m)];
  }
  auto mean_of = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  report.holdout_nll.push_back(mean_of(current));

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    bool any_active = false;
    for (Index m = 0; m < members; ++m) {
      const auto mi = static_cast<std::size_t>(m);
      if (since[mi] >= config.patience) continue;
      any_active = true;
      const auto perm = permutation(n_train, rng);
      Index updates = 0;
      for (Index start = 0; start < n_train; start += config.batch_size) {
        if (config.max_updates_per_epoch > 0 && updates >= config.max_updates_per_epoch) break;
        const Index len = std::min(config.batch_size, n_train - start);
        std::vector<Index> rows(static_cast<std::size_t>(len));
        for (Index j = 0; j < len; ++j) rows[static_cast<std::size_t>(j)] = boot[mi][static_cast<std::size_t>(perm[static_cast<std::size_t>(start + j)])];
        Tape tape;
        const Var loss = member_loss(tape, model, m, model.member(m), x_train(rows, Eigen::all), y_train(rows, Eigen::all));
        if (!std::isfinite(loss.scalar())) throw NumericError("train_model: non-finite loss in member " + std::to_string(m));
        tape.backward(loss);
        opt[mi].step(model.member(m), tape.gradients(model.member(m)));
        ++updates;
      }
      current[mi] = holdout_nll(model, m, x_hold, y_hold);
      if (current[mi] < report.member_holdout[mi]) {
        report.member_holdout[mi] = current[mi];
        report.member_best_epoch[mi] = epoch;
        best_store[mi] = model.member(m);
        since[mi] = 0;
      } else {
        ++since[mi];
      }
    }
    if (!any_active) break;
    report.epochs_run = epoch;
    report.holdout_nll.push_back(mean_of(current));
  }
  for (Index m = 0; m < members; ++m) model.member(m) = best_store[static_cast<std::size_t>(m)];

  std::vector<Index> rank(static_cast<std::size_t>(members));
  std::iota(rank.begin(), rank.end(), Index{0});
  std::stable_sort(rank.begin(), rank.end(), [&](Index a, Index b) {
    return report.member_holdout[static_cast<std::size_t>(a)] < report.member_holdout[static_cast<std::size_t>(b)];
  });
  rank.resize(static_cast<std::size_t>(model.config().elites));
  std::sort(rank.begin(), rank.end());
  model.set_elites(rank);
  report.elites = rank;
  return report;
}

}  // namespace planval::model
