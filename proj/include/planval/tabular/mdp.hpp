#pragma once

#include "planval/core.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace planval::tabular {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Finite MDP with exact tables.
///
/// `transition` has one row per (state, action) pair at row `s * n_actions + a`,
/// holding the distribution over next states; `reward` is n_states x n_actions.
template <typename Scalar = double>
class TabularMDP {
 public:
  using MatrixType = MatrixX<Scalar>;

  TabularMDP(MatrixType transition, MatrixType reward, Scalar gamma)
      : transition_(std::move(transition)), reward_(std::move(reward)), gamma_(gamma) {
    const Index ns = reward_.rows();
    const Index na = reward_.cols();
    if (ns <= 0 || na <= 0) throw ShapeError("TabularMDP: empty state or action space");
    if (transition_.rows() != ns * na || transition_.cols() != ns)
      throw ShapeError("TabularMDP: transition table must be (n_states*n_actions) x n_states");
    if (!(gamma_ > Scalar(0) && gamma_ < Scalar(1)))
      throw PreconditionError("TabularMDP: gamma must lie strictly inside (0, 1)");
    if (!reward_.allFinite()) throw NumericError("TabularMDP: non-finite reward");
    for (Index row = 0; row < transition_.rows(); ++row) {
      if ((transition_.row(row).array() < Scalar(0)).any())
        throw PreconditionError("TabularMDP: negative transition probability in row " +
                                std::to_string(row));
      if (std::abs(transition_.row(row).sum() - Scalar(1)) > Scalar(1e-12))
        throw PreconditionError("TabularMDP: transition row " + std::to_string(row) +
                                " does not sum to 1");
    }
    per_action_.reserve(static_cast<std::size_t>(na));
    for (Index a = 0; a < na; ++a) {
      MatrixType pa(ns, ns);
      for (Index s = 0; s < ns; ++s) pa.row(s) = transition_.row(s * na + a);
      per_action_.push_back(std::move(pa));
    }
  }

  Index n_states() const { return reward_.rows(); }
  Index n_actions() const { return reward_.cols(); }
  Scalar gamma() const { return gamma_; }

  const MatrixType& transition() const { return transition_; }
  const MatrixType& reward() const { return reward_; }
  Scalar reward(Index s, Index a) const { return reward_(s, a); }

  /// Next-state distribution for (s, a) as a row.
  auto next(Index s, Index a) const { return transition_.row(s * n_actions() + a); }

  /// n_states x n_states transition matrix of a single action.
  const MatrixType& action_matrix(Index a) const { return per_action_[static_cast<std::size_t>(a)]; }

  /// Same MDP with every reward multiplied by `factor`.
  TabularMDP scaled_rewards(Scalar factor) const { return {transition_, reward_ * factor, gamma_}; }

 private:
  MatrixType transition_;
  MatrixType reward_;
  Scalar gamma_;
  std::vector<MatrixType> per_action_;
};

/// Stationary stochastic policy pi(a|s), one probability row per state.
template <typename Scalar = double>
class TabularPolicy {
 public:
  using MatrixType = MatrixX<Scalar>;

  explicit TabularPolicy(MatrixType probs) : probs_(std::move(probs)) {
    for (Index s = 0; s < probs_.rows(); ++s) {
      if ((probs_.row(s).array() < Scalar(0)).any() ||
          std::abs(probs_.row(s).sum() - Scalar(1)) > Scalar(1e-12))
        throw PreconditionError("TabularPolicy: row " + std::to_string(s) +
                                " is not a probability vector");
    }
  }

  static TabularPolicy uniform(Index n_states, Index n_actions) {
    return TabularPolicy(MatrixType::Constant(n_states, n_actions, Scalar(1) / Scalar(n_actions)));
  }

  static TabularPolicy deterministic(std::span<const Index> actions, Index n_actions) {
    MatrixType p = MatrixType::Zero(static_cast<Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) p(static_cast<Index>(s), actions[s]) = Scalar(1);
    return TabularPolicy(std::move(p));
  }

  Index n_states() const { return probs_.rows(); }
  Index n_actions() const { return probs_.cols(); }
  const MatrixType& probs() const { return probs_; }
  Scalar operator()(Index s, Index a) const { return probs_(s, a); }

  bool is_deterministic() const {
    return ((probs_.array() == Scalar(0)) || (probs_.array() == Scalar(1))).all();
  }

  /// Greedy action per state; lowest index wins ties.
  std::vector<Index> argmax_actions() const {
    std::vector<Index> out(static_cast<std::size_t>(probs_.rows()));
    for (Index s = 0; s < probs_.rows(); ++s) probs_.row(s).maxCoeff(&out[static_cast<std::size_t>(s)]);
    return out;
  }

  bool operator==(const TabularPolicy& other) const { return probs_ == other.probs_; }

 private:
  MatrixType probs_;
};

/// Policy-conditioned one-step quantities: r_pi(s) and P_pi(s, s').
template <typename Scalar>
VectorX<Scalar> policy_reward(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi) {
  return (mdp.reward().array() * pi.probs().array()).rowwise().sum();
}

template <typename Scalar>
MatrixX<Scalar> policy_transition(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi) {
  MatrixX<Scalar> p = MatrixX<Scalar>::Zero(mdp.n_states(), mdp.n_states());
  for (Index a = 0; a < mdp.n_actions(); ++a) p += pi.probs().col(a).asDiagonal() * mdp.action_matrix(a);
  return p;
}

/// Shannon entropy of pi(.|s) for every state, with 0 log 0 = 0.
template <typename Scalar>
VectorX<Scalar> policy_entropy(const TabularPolicy<Scalar>& pi) {
  VectorX<Scalar> h = VectorX<Scalar>::Zero(pi.n_states());
  for (Index s = 0; s < pi.n_states(); ++s)
    for (Index a = 0; a < pi.n_actions(); ++a) {
      const Scalar p = pi(s, a);
      if (p > Scalar(0)) h(s) -= p * std::log(p);
    }
  return h;
}

}  // namespace planval::tabular
