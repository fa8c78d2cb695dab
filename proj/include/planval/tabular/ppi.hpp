#pragma once

#include "planval/tabular/plan.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace planval::tabular {

inline constexpr long kEvaluationSweepCap = 100'000;

/// Iterates the extended Bellman operator from Q_0 = 0 until the sup-norm change drops below `tol`.
/// `on_sweep`, when set, sees every iterate (used to check the contraction property).
template <typename Scalar>
PlanValueTable<Scalar> evaluate_policy(const TabularMDP<Scalar>& mdp, const TabularPolicy<Scalar>& pi, int k,
                                       bool soft, Scalar alpha, Scalar tol,
                                       const std::function<void(const MatrixX<Scalar>&)>& on_sweep = {},
                                       long sweep_cap = kEvaluationSweepCap, long* sweeps_out = nullptr,
                                       Scalar* residual_out = nullptr) {
  if (!(tol > Scalar(0))) throw PreconditionError("evaluate_policy: tol must be positive");
  const PlanOperator<Scalar> op(mdp, pi, k, soft, alpha);
  MatrixX<Scalar> q = MatrixX<Scalar>::Zero(mdp.n_states(), op.kernel.n_plans());
  if (on_sweep) on_sweep(q);
  Scalar residual = std::numeric_limits<Scalar>::infinity();
  for (long sweep = 1; sweep <= sweep_cap; ++sweep) {
    MatrixX<Scalar> next = op.apply(q);
    residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (on_sweep) on_sweep(q);
    if (residual < tol) {
      if (sweeps_out) *sweeps_out = sweep;
      if (residual_out) *residual_out = residual;
      return {k, mdp.n_actions(), std::move(q)};
    }
  }
  throw ConvergenceError("evaluate_policy: no convergence within the sweep cap", static_cast<double>(residual));
}

enum class ImproveSearch { Automatic, Exhaustive, Heuristic };

template <typename Scalar = double>
struct ImproveOptions {
  ImproveSearch search = ImproveSearch::Automatic;
  /// Largest n_actions^n_states enumerated by the exhaustive search.
  std::int64_t policy_space_guard = 1'000'000;
  /// Permit the backward-induction fallback when the exhaustive search would exceed the guard.
  bool allow_heuristic = true;
  /// Exhaustive search only: restrict candidates to policies whose per-state expected plan value
  /// is no lower than the old policy's (the premise of monotone improvement).
  bool require_state_improvement = true;
  /// Soft improvement stopping tolerance and sweep cap for the block-coordinate fixed point.
  Scalar soft_tol = Scalar(1e-10);
  long soft_sweep_cap = 20'000;
};

namespace detail {

/// Per-state E_{tau ~ pi_d^k(.|s)}[Q(s, tau)] for a deterministic policy `d`.
template <typename Scalar>
VectorX<Scalar> deterministic_plan_objective(const TabularMDP<Scalar>& mdp, std::span<const Index> d,
                                             const MatrixX<Scalar>& q, int k) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  VectorX<Scalar> out(ns);
  VectorX<Scalar> scratch(ns);
  // depth-first over plan prefixes; only actions chosen by d somewhere carry mass
  std::function<Scalar(Index, int, Index, const VectorX<Scalar>&)> visit =
      [&](Index s0, int m, Index prefix, const VectorX<Scalar>& joint) -> Scalar {
    Scalar acc = 0;
    for (Index a = 0; a < na; ++a) {
      VectorX<Scalar> w = VectorX<Scalar>::Zero(ns);
      bool any = false;
      for (Index s = 0; s < ns; ++s) {
        if (d[static_cast<std::size_t>(s)] == a && joint(s) > Scalar(0)) {
          w(s) = joint(s);
          any = true;
        }
      }
      if (!any) continue;
      const Index next_prefix = prefix * na + a;
      if (m == k - 1) {
        acc += w.sum() * q(s0, next_prefix);
      } else {
        acc += visit(s0, m + 1, next_prefix, mdp.action_matrix(a).transpose() * w);
      }
    }
    return acc;
  };
  for (Index s = 0; s < ns; ++s) out(s) = visit(s, 0, 0, VectorX<Scalar>::Unit(ns, s));
  return out;
}

template <typename Scalar>
TabularPolicy<Scalar> greedy_k1(const MatrixX<Scalar>& q) {
  std::vector<Index> actions(static_cast<std::size_t>(q.rows()));
  for (Index s = 0; s < q.rows(); ++s) q.row(s).maxCoeff(&actions[static_cast<std::size_t>(s)]);
  return TabularPolicy<Scalar>::deterministic(actions, q.cols());
}

/// Backward induction over k steps with terminal value V^{pi_old}; first-step greedy action.
template <typename Scalar>
TabularPolicy<Scalar> backward_induction(const TabularMDP<Scalar>& mdp, const VectorX<Scalar>& v_old, int k) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  VectorX<Scalar> v = v_old;
  MatrixX<Scalar> qa(ns, na);
  for (int step = 0; step < k; ++step) {
    for (Index a = 0; a < na; ++a) qa.col(a) = mdp.reward().col(a) + mdp.gamma() * (mdp.action_matrix(a) * v);
    v = qa.rowwise().maxCoeff();
  }
  return greedy_k1<Scalar>(qa);
}

template <typename Scalar>
TabularPolicy<Scalar> exhaustive_improvement(const TabularMDP<Scalar>& mdp, const MatrixX<Scalar>& q, int k,
                                             const VectorX<Scalar>* floor) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  std::vector<Index> current(static_cast<std::size_t>(ns), 0);
  std::vector<Index> best;
  Scalar best_value = -std::numeric_limits<Scalar>::infinity();
  const Scalar tie = Scalar(1e-12) * std::max<Scalar>(Scalar(1), q.cwiseAbs().maxCoeff());
  // lexicographic enumeration (state 0 most significant) so the first maximizer has the lowest indices
  while (true) {
    const VectorX<Scalar> per_state = deterministic_plan_objective<Scalar>(mdp, current, q, k);
    bool feasible = true;
    if (floor) feasible = ((per_state - *floor).array() >= -tie).all();
    const Scalar value = per_state.sum();
    if (feasible && value > best_value + tie) {
      best_value = value;
      best = current;
    }
    Index pos = ns - 1;
    while (pos >= 0 && current[static_cast<std::size_t>(pos)] == na - 1) {
      current[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++current[static_cast<std::size_t>(pos)];
  }
  if (best.empty()) throw StateError("exhaustive_improvement: no feasible policy (floor above every candidate)");
  return TabularPolicy<Scalar>::deterministic(best, na);
}

/// Partial derivatives of the soft improvement objective with respect to pi(.|target), split into the
/// linear part g(a) and the coefficient c of the target state's own entropy term.
template <typename Scalar>
void soft_block_terms(const TabularMDP<Scalar>& mdp, const MatrixX<Scalar>& pi, const MatrixX<Scalar>& q, int k,
                      Scalar alpha, Index target, VectorX<Scalar>& g, Scalar& c) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  const Scalar gamma = mdp.gamma();
  g = VectorX<Scalar>::Zero(na);
  c = 0;
  MatrixX<Scalar> log_pi = MatrixX<Scalar>::Zero(ns, na);
  for (Index s = 0; s < ns; ++s)
    for (Index a = 0; a < na; ++a)
      if (pi(s, a) > Scalar(0)) log_pi(s, a) = std::log(pi(s, a));

  for (Index s0 = 0; s0 < ns; ++s0) {
    // forward[m][prefix] = joint probability of (prefix, s_m) as a vector over s_m
    std::vector<std::vector<VectorX<Scalar>>> forward(static_cast<std::size_t>(k));
    forward[0].push_back(VectorX<Scalar>::Unit(ns, s0));
    for (int m = 1; m < k; ++m) {
      const auto& prev = forward[static_cast<std::size_t>(m - 1)];
      auto& cur = forward[static_cast<std::size_t>(m)];
      cur.reserve(prev.size() * static_cast<std::size_t>(na));
      for (const auto& f : prev)
        for (Index a = 0; a < na; ++a)
          cur.push_back(mdp.action_matrix(a).transpose() * f.cwiseProduct(pi.col(a)));
    }
    // backward[m][prefix] = expected remaining objective from (prefix, s_m = s) as a vector over s
    std::vector<std::vector<VectorX<Scalar>>> backward(static_cast<std::size_t>(k + 1));
    const Index n_plans = q.cols();
    backward[static_cast<std::size_t>(k)].reserve(static_cast<std::size_t>(n_plans));
    for (Index tau = 0; tau < n_plans; ++tau)
      backward[static_cast<std::size_t>(k)].push_back(VectorX<Scalar>::Constant(ns, q(s0, tau)));
    Scalar discount_m = std::pow(gamma, k - 1);
    for (int m = k - 1; m >= 0; --m) {
      const auto& nxt = backward[static_cast<std::size_t>(m + 1)];
      auto& cur = backward[static_cast<std::size_t>(m)];
      const std::size_t n_prefix = nxt.size() / static_cast<std::size_t>(na);
      cur.assign(n_prefix, VectorX<Scalar>::Zero(ns));
      for (std::size_t p = 0; p < n_prefix; ++p) {
        for (Index a = 0; a < na; ++a) {
          const VectorX<Scalar> cont = mdp.action_matrix(a) * nxt[p * static_cast<std::size_t>(na) + static_cast<std::size_t>(a)];
          cur[p] += pi.col(a).cwiseProduct(cont - alpha * discount_m * log_pi.col(a));
        }
      }
      // accumulate derivative terms for the target state at depth m
      const auto& fwd = forward[static_cast<std::size_t>(m)];
      for (std::size_t p = 0; p < fwd.size(); ++p) {
        const Scalar reach = fwd[p](target);
        if (reach == Scalar(0)) continue;
        c += alpha * discount_m * reach;
        for (Index a = 0; a < na; ++a)
          g(a) += reach * mdp.next(target, a).dot(nxt[p * static_cast<std::size_t>(na) + static_cast<std::size_t>(a)]);
      }
      discount_m /= gamma;
    }
  }
}

template <typename Scalar>
TabularPolicy<Scalar> soft_improvement(const TabularMDP<Scalar>& mdp, const MatrixX<Scalar>& q, int k, Scalar alpha,
                                       const TabularPolicy<Scalar>& start, Scalar tol, long sweep_cap) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  auto softmax = [](const VectorX<Scalar>& logits) {
    const Scalar mx = logits.maxCoeff();
    VectorX<Scalar> e = (logits.array() - mx).exp();
    return VectorX<Scalar>(e / e.sum());
  };
  if (k == 1) {
    MatrixX<Scalar> probs(ns, na);
    for (Index s = 0; s < ns; ++s) probs.row(s) = softmax(q.row(s).transpose() / alpha).transpose();
    return TabularPolicy<Scalar>(std::move(probs));
  }
  MatrixX<Scalar> pi = start.probs();
  VectorX<Scalar> g;
  Scalar c = 0;
  Scalar change = std::numeric_limits<Scalar>::infinity();
  for (long sweep = 0; sweep < sweep_cap; ++sweep) {
    change = 0;
    for (Index s = 0; s < ns; ++s) {
      soft_block_terms<Scalar>(mdp, pi, q, k, alpha, s, g, c);
      const VectorX<Scalar> row = softmax(g / c);
      change = std::max(change, (row.transpose() - pi.row(s)).cwiseAbs().maxCoeff());
      pi.row(s) = row.transpose();
    }
    if (change < tol) return TabularPolicy<Scalar>(std::move(pi));
  }
  throw ConvergenceError("soft policy improvement: block-coordinate iteration did not reach a fixed point",
                         static_cast<double>(change));
}

}  // namespace detail

/// Planning policy improvement.
///
/// Vanilla: a deterministic stationary policy maximizing sum_s E_{tau ~ pi^k(.|s)}[q(s, tau)], by exhaustive
/// search over deterministic policies, or by k-step backward induction when the search space exceeds the guard.
/// `old_policy` supplies the per-state floor for the exhaustive search and the terminal values for backward
/// induction; pass nullptr to search unconstrained (the heuristic then uses V = max_tau q).
/// Soft: block-coordinate fixed point of the entropy-regularized objective, exact softmax when k = 1.
template <typename Scalar>
TabularPolicy<Scalar> improve_policy(const TabularMDP<Scalar>& mdp, const PlanValueTable<Scalar>& q, bool soft,
                                     Scalar alpha, const TabularPolicy<Scalar>* old_policy = nullptr,
                                     const ImproveOptions<Scalar>& options = {}) {
  if (q.n_states() != mdp.n_states() || q.n_actions != mdp.n_actions())
    throw ShapeError("improve_policy: plan value table does not match the MDP");
  const int k = q.k;
  if (soft) {
    if (!(alpha > Scalar(0))) throw PreconditionError("soft improvement requires alpha > 0");
    const TabularPolicy<Scalar> start =
        old_policy ? *old_policy : TabularPolicy<Scalar>::uniform(mdp.n_states(), mdp.n_actions());
    return detail::soft_improvement<Scalar>(mdp, q.values, k, alpha, start, options.soft_tol,
                                            options.soft_sweep_cap);
  }
  if (k == 1) return detail::greedy_k1<Scalar>(q.values);

  bool exhaustive = options.search == ImproveSearch::Exhaustive;
  if (options.search == ImproveSearch::Automatic) {
    double space = std::pow(static_cast<double>(mdp.n_actions()), static_cast<double>(mdp.n_states()));
    exhaustive = space <= static_cast<double>(options.policy_space_guard);
    if (!exhaustive && !options.allow_heuristic)
      throw CapacityError("improve_policy: n_actions^n_states exceeds the exhaustive-search guard");
  }
  if (exhaustive) {
    std::optional<VectorX<Scalar>> floor;
    if (old_policy && options.require_state_improvement) {
      const MatrixX<Scalar> probs = plan_probabilities(mdp, *old_policy, k);
      floor = probs.cwiseProduct(q.values).rowwise().sum();
    }
    return detail::exhaustive_improvement<Scalar>(mdp, q.values, k, floor ? &*floor : nullptr);
  }
  VectorX<Scalar> v_old;
  if (old_policy) {
    v_old = plan_probabilities(mdp, *old_policy, k).cwiseProduct(q.values).rowwise().sum();
  } else {
    v_old = q.values.rowwise().maxCoeff();
  }
  return detail::backward_induction<Scalar>(mdp, v_old, k);
}

template <typename Scalar = double>
struct PPIIteration {
  long sweeps = 0;
  Scalar residual = 0;
  VectorX<Scalar> state_values;  // V(s) = E_{tau ~ pi^k}[Q(s, tau)] (+ entropy when soft)
};

template <typename Scalar = double>
struct MonotonicityViolation {
  int iteration = 0;
  Scalar worst_drop = 0;
};

template <typename Scalar = double>
struct PPIResult {
  TabularPolicy<Scalar> policy;
  PlanValueTable<Scalar> values;
  std::vector<PPIIteration<Scalar>> trace;
  std::vector<MonotonicityViolation<Scalar>> violations;
};

template <typename Scalar = double>
struct PPIOptions {
  ImproveOptions<Scalar> improve{};
  int max_iterations = 1000;
  /// Sup-norm change in the policy below which soft iteration counts as converged.
  Scalar policy_tol = Scalar(1e-10);
  Scalar monotonicity_slack = Scalar(1e-10);
};

/// Alternates planning policy evaluation and improvement from the uniform policy until the policy is unchanged.
template <typename Scalar>
PPIResult<Scalar> planning_policy_iteration(const TabularMDP<Scalar>& mdp, int k, bool soft, Scalar alpha,
                                            Scalar tol, const PPIOptions<Scalar>& options = {}) {
  TabularPolicy<Scalar> pi = TabularPolicy<Scalar>::uniform(mdp.n_states(), mdp.n_actions());
  PPIResult<Scalar> result{pi, PlanValueTable<Scalar>::zeros(mdp.n_states(), mdp.n_actions(), k), {}, {}};
  std::optional<PlanValueTable<Scalar>> previous;
  for (int it = 0; it < options.max_iterations; ++it) {
    PPIIteration<Scalar> record;
    PlanValueTable<Scalar> q = evaluate_policy<Scalar>(mdp, pi, k, soft, alpha, tol, {}, kEvaluationSweepCap,
                                                       &record.sweeps, &record.residual);
    record.state_values = PlanOperator<Scalar>(mdp, pi, k, soft, alpha).state_values(q.values);
    if (previous) {
      const Scalar drop = (previous->values - q.values).maxCoeff();
      if (drop > options.monotonicity_slack) result.violations.push_back({it, drop});
    }
    result.trace.push_back(std::move(record));

    TabularPolicy<Scalar> next = improve_policy<Scalar>(mdp, q, soft, alpha, &pi, options.improve);
    const Scalar change = (next.probs() - pi.probs()).cwiseAbs().maxCoeff();
    const bool unchanged = soft ? change < options.policy_tol : next == pi;
    result.values = std::move(q);
    if (unchanged) {
      result.policy = std::move(pi);
      return result;
    }
    previous = result.values;
    pi = std::move(next);
  }
  throw ConvergenceError("planning_policy_iteration: policy did not stabilize", 0.0);
}

/// Independent reference: standard value iteration to 1e-12 and greedy extraction (lowest index on ties).
template <typename Scalar>
std::pair<TabularPolicy<Scalar>, VectorX<Scalar>> oracle_optimal(const TabularMDP<Scalar>& mdp) {
  const Index ns = mdp.n_states();
  const Index na = mdp.n_actions();
  VectorX<Scalar> v = VectorX<Scalar>::Zero(ns);
  MatrixX<Scalar> qa(ns, na);
  for (long it = 0; it < 10'000'000; ++it) {
    for (Index a = 0; a < na; ++a) qa.col(a) = mdp.reward().col(a) + mdp.gamma() * (mdp.action_matrix(a) * v);
    VectorX<Scalar> next = qa.rowwise().maxCoeff();
    const Scalar delta = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta < Scalar(1e-12)) break;
  }
  for (Index a = 0; a < na; ++a) qa.col(a) = mdp.reward().col(a) + mdp.gamma() * (mdp.action_matrix(a) * v);
  return {detail::greedy_k1<Scalar>(qa), v};
}

}  // namespace planval::tabular
