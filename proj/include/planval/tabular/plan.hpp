#pragma once

#include "planval/tabular/mdp.hpp"

#include <cstdint>
#include <vector>

namespace planval::tabular {

/// Largest plan space |A|^k the tabular routines will enumerate.
inline constexpr std::int64_t kPlanSpaceGuard = 1'000'000;

/// |A|^k, or CapacityError when it exceeds `guard`.
inline Index plan_count(Index n_actions, int k, std::int64_t guard = kPlanSpaceGuard) {
  if (k < 1) throw PreconditionError("plan length k must be >= 1");
  std::int64_t count = 1;
  for (int m = 0; m < k; ++m) {
    count *= n_actions;
    if (count > guard)
      throw CapacityError("plan space |A|^k = " + std::to_string(n_actions) + "^" + std::to_string(k) +
                          " exceeds the enumeration guard " + std::to_string(guard));
  }
  return static_cast<Index>(count);
}

/// Plans are indexed with the first action as the most significant digit.
inline Index plan_index(std::span<const Index> actions, Index n_actions) {
  Index idx = 0;
  for (Index a : actions) idx = idx * n_actions + a;
  return idx;
}

inline std::vector<Index> plan_actions(Index index, Index n_actions, int k) {
  std::vector<Index> out(static_cast<std::size_t>(k));
  for (int m = k - 1; m >= 0; --m) {
    out[static_cast<std::size_t>(m)] = index % n_actions;
    index /= n_actions;
  }
  return out;
}

/// Q(s, tau) for every state and every k-action plan.
template <typename Scalar = double>
struct PlanValueTable {
  int k = 1;
  Index n_actions = 0;
  MatrixX<Scalar> values;  // n_states x n_actions^k

  static PlanValueTable zeros(Index n_states, Index n_actions, int k) {
    return {k, n_actions, MatrixX<Scalar>::Zero(n_states, plan_count(n_actions, k))};
  }

  Index n_states() const { return values.rows(); }
  Index n_plans() const { return values.cols(); }
  Scalar operator()(Index s, std::span<const Index> plan) const {
    return values(s, plan_index(plan, n_actions));
  }
};

template <typename Scalar = double>
struct PlanProbability {
  std::vector<Index> plan;
  Scalar probability;
};

/// Support of pi^k(.|s): plans with strictly positive probability.
template <typename Scalar = double>
struct PlanDistribution {
  std::vector<PlanProbability<Scalar>> support;

  Scalar total() const {
    Scalar t = 0;
    for (const auto& p : support) t += p.probability;
    return t;
  }
};

/// Exact k-step quantities of an MDP that do not depend on the policy:
/// the discounted reward sum along each plan and the distribution of s_{t+k}.
template <typename Scalar = double>
class PlanKernel {
 public:
  PlanKernel(const TabularMDP<Scalar>& mdp, int k) : k_(k) {
    const Index ns = mdp.n_states();
    const Index na = mdp.n_actions();
    n_plans_ = plan_count(na, k);
    rewards_ = MatrixX<Scalar>::Zero(ns, n_plans_);
    terminal_ = MatrixX<Scalar>::Zero(ns * n_plans_, ns);
    for (Index s = 0; s < ns; ++s) {
      // prefix-major sweep: dist[prefix] is the state distribution after executing the prefix
      std::vector<VectorX<Scalar>> dist(1, VectorX<Scalar>::Unit(ns, s));
      std::vector<Scalar> ret(1, Scalar(0));
      Scalar discount = 1;
      for (int m = 0; m < k; ++m) {
        std::vector<VectorX<Scalar>> next_dist;
        std::vector<Scalar> next_ret;
        next_dist.reserve(dist.size() * static_cast<std::size_t>(na));
        next_ret.reserve(dist.size() * static_cast<std::size_t>(na));
        for (std::size_t p = 0; p < dist.size(); ++p) {
          for (Index a = 0; a < na; ++a) {
            next_ret.push_back(ret[p] + discount * dist[p].dot(mdp.reward().col(a)));
            next_dist.push_back(mdp.action_matrix(a).transpose() * dist[p]);
          }
        }
        dist = std::move(next_dist);
        ret = std::move(next_ret);
        discount *= mdp.gamma();
      }
      for (Index tau = 0; tau < n_plans_; ++tau) {
        rewards_(s, tau) = ret[static_cast<std::size_t>(tau)];
        terminal_.row(s * n_plans_ + tau) = dist[static_cast<std::size_t>(tau)].transpose();
      }
    }
  }

  int k() const { return k_; }
  Index n_plans() const { return n_plans_; }
  /// E[sum_{m<k} gamma^m r_{t+m} | s, tau], n_states x n_plans.
  const MatrixX<Scalar>& rewards() const { return rewards_; }
  /// Row (s * n_plans + tau): distribution of s_{t+k}.
  const MatrixX<Scalar>& terminal() const { return terminal_; }

 private:
  int k_;
  Index n_plans_ = 0;
  MatrixX<Scalar> rewards_;
  MatrixX<Scalar> terminal_;
};

/// n_states x n_plans matrix of pi^k(tau | s), computed by forward recursion over
/// plan prefixes carrying the joint (prefix, current state) probability.
template <typename Scalar>
MatrixX<Scalar> plan_probabilities(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi, int k) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  const Index n_plans = plan_count(na, k);
  if (pi.n_states() != ns || pi.n_actions() != na) throw ShapeError("policy does not match MDP");
  MatrixX<Scalar> out(ns, n_plans);
  for (Index s = 0; s < ns; ++s) {
    std::vector<VectorX<Scalar>> joint(1, VectorX<Scalar>::Unit(ns, s));
    for (int m = 0; m < k; ++m) {
      const bool last = (m == k - 1);
      std::vector<VectorX<Scalar>> next;
      next.reserve(joint.size() * static_cast<std::size_t>(na));
      for (const auto& j : joint) {
        for (Index a = 0; a < na; ++a) {
          VectorX<Scalar> w = j.cwiseProduct(pi.probs().col(a));
          next.push_back(last ? w : VectorX<Scalar>(mdp.action_matrix(a).transpose() * w));
        }
      }
      joint = std::move(next);
    }
    for (Index tau = 0; tau < n_plans; ++tau) out(s, tau) = joint[static_cast<std::size_t>(tau)].sum();
  }
  return out;
}

/// Exact marginal distribution of k-action plans started at `state`.
template <typename Scalar>
PlanDistribution<Scalar> plan_distribution(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi,
                                           Index state, int k) {
  if (state < 0 || state >= mdp.n_states()) throw PreconditionError("plan_distribution: state out of range");
  const MatrixX<Scalar> probs = plan_probabilities(mdp, pi, k);
  PlanDistribution<Scalar> out;
  for (Index tau = 0; tau < probs.cols(); ++tau) {
    if (probs(state, tau) > Scalar(0))
      out.support.push_back({plan_actions(tau, mdp.n_actions(), k), probs(state, tau)});
  }
  return out;
}

/// Expected discounted policy entropy over the k decisions of a plan drawn at s:
/// sum_{m<k} gamma^m E[H(pi(.|s_{t+m}))].
template <typename Scalar>
VectorX<Scalar> discounted_plan_entropy(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi, int k) {
  const VectorX<Scalar> h = policy_entropy(pi);
  const MatrixX<Scalar> p = policy_transition(mdp, pi);
  VectorX<Scalar> out = VectorX<Scalar>::Zero(mdp.n_states());
  VectorX<Scalar> term = h;
  Scalar discount = 1;
  for (int m = 0; m < k; ++m) {
    out += discount * term;
    term = p * term;
    discount *= mdp.gamma();
  }
  return out;
}

/// Policy-dependent pieces of the extended Bellman operator, reusable across sweeps.
template <typename Scalar = double>
struct PlanOperator {
  PlanKernel<Scalar> kernel;
  MatrixX<Scalar> plan_probs;  // pi^k(tau|s)
  VectorX<Scalar> entropy;     // discounted plan entropy, zero for the vanilla operator
  Scalar alpha = 0;
  Scalar gamma_k = 1;

  PlanOperator(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi, int k, bool soft, Scalar alpha_)
      : kernel(mdp, k), plan_probs(plan_probabilities(mdp, pi, k)), alpha(soft ? alpha_ : Scalar(0)) {
    if (soft && !(alpha_ > Scalar(0))) throw PreconditionError("soft backup requires alpha > 0");
    entropy = soft ? discounted_plan_entropy(mdp, pi, k) : VectorX<Scalar>::Zero(mdp.n_states());
    gamma_k = std::pow(mdp.gamma(), k);
  }

  /// V(s) = E_{tau ~ pi^k}[Q(s, tau)] (+ alpha * discounted plan entropy when soft).
  VectorX<Scalar> state_values(const MatrixX<Scalar>& q) const {
    return (plan_probs.cwiseProduct(q)).rowwise().sum() + alpha * entropy;
  }

  MatrixX<Scalar> apply(const MatrixX<Scalar>& q) const {
    const VectorX<Scalar> v = state_values(q);
    const VectorX<Scalar> next = kernel.terminal() * v;  // (n_states * n_plans)
    using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> expected(next.data(), q.rows(), q.cols());
    return kernel.rewards() + gamma_k * MatrixX<Scalar>(expected);
  }
};

/// One application of the extended Bellman operator T^pi to `q`.
template <typename Scalar>
PlanValueTable<Scalar> bellman_backup(const TabularMDP<Scalar>& mdp, const PlanValueTable<Scalar>& q,
                                      const TabularPolicy<Scalar>& pi, bool soft, Scalar alpha) {
  if (q.n_states() != mdp.n_states() || q.n_actions != mdp.n_actions() ||
      q.n_plans() != plan_count(mdp.n_actions(), q.k))
    throw ShapeError("bellman_backup: plan value table does not match the MDP");
  const PlanOperator<Scalar> op(mdp, pi, q.k, soft, alpha);
  return {q.k, q.n_actions, op.apply(q.values)};
}

}  // namespace planval::tabular
