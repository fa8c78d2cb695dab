#include "doctest.h"

#include "planval/analysis/analysis.hpp"
#include "planval/env/pendulum.hpp"
#include "planval/env/random_mdp.hpp"
#include "planval/model/stubs.hpp"
#include "planval/tabular/ppi.hpp"
#include "support/tabular_rl.hpp"

#include <cmath>

using namespace planval;
using namespace planval::analysis;

TEST_CASE("normalized_cosine: fixed points, symmetry and scale invariance") {
  const Vector g{{1.0, 2.0, -0.5}};
  CHECK(normalized_cosine(g, g) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(normalized_cosine(g, -g) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normalized_cosine(Vector{{1.0, 0.0}}, Vector{{0.0, 3.0}}) == 0.5);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vector a = standard_normal(6, 1, rng), b = standard_normal(6, 1, rng);
    const double c = 0.1 + 10.0 * uniform01(rng);
    CHECK(normalized_cosine(a, b) == doctest::Approx(normalized_cosine(b, a)).epsilon(1e-14));
    CHECK(normalized_cosine(c * a, b) == doctest::Approx(normalized_cosine(a, b)).epsilon(1e-14));
    const double v = normalized_cosine(a, b);
    CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK_THROWS_AS(normalized_cosine(Vector::Zero(3), g), DegenerateInput);
  CHECK_THROWS_AS(normalized_cosine(g, Vector::Zero(3)), DegenerateInput);
}

TEST_CASE("severe_error_ratio: extremes, hand-counted fixture and empty bins") {
  std::vector<GradStudyRecord> all_good, all_bad;
  for (int i = 0; i < 6; ++i) {
    all_good.push_back({i, 0.1 * i, 1.0, 1.0});
    all_bad.push_back({i, 0.1 * i, 0.0, 0.0});
  }
  for (const auto& b : severe_error_ratio(all_good, {0.0, 0.3, 0.6})) CHECK(*b.ratio_mppve == 0.0);
  for (const auto& b : severe_error_ratio(all_bad, {0.0, 0.3, 0.6})) CHECK(*b.ratio_mbpo == 1.0);

  // bin [0,1): 4 records, mppve bad 1, mbpo bad 3; bin [1,2): empty; bin [2,3]: 2 records, mppve 0, mbpo 1
  const std::vector<GradStudyRecord> mixed{{0, 0.1, 0.9, 0.2}, {1, 0.5, 0.4, 0.3},  {2, 0.7, 0.6, 0.45},
                                           {3, 0.99, 0.8, 0.7}, {4, 2.0, 0.51, 0.49}, {5, 3.0, 0.5, 0.5}};
  const auto bins = severe_error_ratio(mixed, {0.0, 1.0, 2.0, 3.0});
  REQUIRE(bins.size() == 3);
  CHECK(bins[0].count == 4);
  CHECK(*bins[0].ratio_mppve == 0.25);
  CHECK(*bins[0].ratio_mbpo == 0.75);
  CHECK(bins[1].count == 0);
  CHECK_FALSE(bins[1].ratio_mppve.has_value());
  CHECK_FALSE(bins[1].ratio_mbpo.has_value());
  CHECK(bins[2].count == 2);
  CHECK(*bins[2].ratio_mppve == 0.0);
  CHECK(*bins[2].ratio_mbpo == 0.5);

  CHECK_THROWS_AS(severe_error_ratio({}, {0.0, 1.0}), PreconditionError);
}

namespace {

struct StudySetup {
  env::Pendulum env;
  Rng rng{11};
  actor::Actor pi{3, 1, {{32, 32}}, rng};
  critic::PlanCritic plan_critic{3, 1, {3, {32, 32}}, rng};
  critic::PlanCritic step_critic{3, 1, {1, {32, 32}}, rng};
  Matrix states() {
    Matrix s(20, 3);
    for (Index i = 0; i < s.rows(); ++i) {
      const double th = -3.0 + 0.3 * static_cast<double>(i);
      s.row(i) << std::cos(th), std::sin(th), -1.0 + 0.1 * static_cast<double>(i);
    }
    return s;
  }
};

}  // namespace

TEST_CASE("gradient_direction_study: true dynamics give identical directions") {
  StudySetup t;
  const auto stub = model::true_model(t.env);
  GradStudyOptions opt;
  opt.alpha = 0.1;
  const auto recs = gradient_direction_study(t.env, *stub, t.pi, t.plan_critic, t.step_critic, t.states(), opt, t.rng);
  REQUIRE(recs.size() == 20);
  for (const auto& r : recs) {
    CHECK(r.rollout_error < 1e-9);
    CHECK(r.ncs_mppve == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.ncs_mbpo == doctest::Approx(1.0).epsilon(1e-12));
  }

  const model::PerturbedModel zero(*stub, 0.0);
  for (const auto& r : gradient_direction_study(t.env, zero, t.pi, t.plan_critic, t.step_critic, t.states(), opt, t.rng)) {
    CHECK(r.rollout_error < 1e-9);
    CHECK(r.ncs_mppve == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradient_direction_study: preconditions") {
  StudySetup t;
  const auto stub = model::true_model(t.env);
  GradStudyOptions opt;
  opt.plan_critic_residual = 0.3;
  CHECK_THROWS_AS(gradient_direction_study(t.env, *stub, t.pi, t.plan_critic, t.step_critic, t.states(), opt, t.rng),
                  PreconditionError);
  opt.plan_critic_residual = 0.0;
  opt.k = 2;
  CHECK_THROWS_AS(gradient_direction_study(t.env, *stub, t.pi, t.plan_critic, t.step_critic, t.states(), opt, t.rng),
                  PreconditionError);
}

TEST_CASE("gradient_direction_study: more injected noise means larger rollout error") {
  StudySetup t;
  const auto stub = model::true_model(t.env);
  GradStudyOptions opt;
  const std::vector<double> sigmas{0.01, 0.05, 0.2};
  std::vector<double> mean_err(sigmas.size(), 0.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t j = 0; j < sigmas.size(); ++j) {
      const model::PerturbedModel noisy(*stub, sigmas[j]);
      Rng rng = derive_rng(seed, 5);
      for (const auto& r : gradient_direction_study(t.env, noisy, t.pi, t.plan_critic, t.step_critic, t.states(), opt, rng))
        mean_err[j] += r.rollout_error;
    }
  }
  CHECK(mean_err[0] < mean_err[1]);
  CHECK(mean_err[1] < mean_err[2]);
}

TEST_CASE("normalized_bias: identity and constant offset are exact") {
  const Vector q{{-4.0, -2.5, -1.5, -8.0}};
  auto [m0, s0] = normalized_bias(q, q);
  CHECK(m0 == 0.0);
  CHECK(s0 == 0.0);
  const double c = 0.75;
  auto [m1, s1] = normalized_bias(q.array() + c, q);
  CHECK(m1 == c / 4.0);
  CHECK(s1 == 0.0);
  CHECK_THROWS_AS(normalized_bias(q, Vector{{1.0, -1.0, 2.0, -2.0}}), DegenerateInput);
}

TEST_CASE("mc_horizon: smallest H with gamma^H below 1e-4") {
  for (double g : {0.5, 0.9, 0.99}) {
    const Index h = mc_horizon(g);
    CHECK(std::pow(g, static_cast<double>(h)) < 1e-4);
    CHECK(std::pow(g, static_cast<double>(h - 1)) >= 1e-4);
  }
}

namespace {

/// Plan value that answers with a deterministic Monte-Carlo estimate plus an offset.
class MonteCarloPlanValue final : public critic::PlanValue {
 public:
  MonteCarloPlanValue(const env::TabularEnv& env, const actor::Actor& pi, Index k, MonteCarloOptions opt, double offset)
      : env_(env), pi_(pi), k_(k), opt_(opt), offset_(offset) {}
  Index k() const override { return k_; }
  Index obs_dim() const override { return env_.mdp().n_states(); }
  Index act_dim() const override { return 1; }
  ad::Var evaluate(ad::Tape& tape, ad::Var obs, ad::Var plan, bool) const override {
    check_inputs(obs, plan);
    count(obs.rows());
    Matrix out(obs.rows(), 1);
    for (Index i = 0; i < obs.rows(); ++i) {
      Rng rng(0);
      const Matrix p = plan.value().row(i).reshaped(1, k_).transpose();
      out(i, 0) = mc_plan_value(env_, obs.value().row(i).transpose(), p, pi_, opt_, rng).mean + offset_;
    }
    return tape.constant(out);
  }

 private:
  const env::TabularEnv& env_;
  const actor::Actor& pi_;
  Index k_;
  MonteCarloOptions opt_;
  double offset_;
};

}  // namespace

TEST_CASE("value_bias_study: MC oracle as critic gives zero bias, offsets give c over the mean") {
  const env::TabularEnv m2(env::toggle_mdp(), "m2");
  // saturated policy: toggle in state 0, stay in state 1, so every rollout is deterministic
  const auto pi = testing::linear_actor(Vector{{3.0, -3.0}}, Vector{{-30.0, -30.0}});
  MonteCarloOptions opt;
  opt.gamma = 0.9;
  opt.n_rollouts = 4;
  const MonteCarloPlanValue exact(m2, pi, 2, opt, 0.0);
  Rng rng(4);
  const auto r0 = value_bias_study(m2, pi, exact, 30, opt, rng);
  CHECK(r0.mean_bias == 0.0);
  CHECK(r0.std_bias == 0.0);

  const double c = 0.5;
  const MonteCarloPlanValue shifted(m2, pi, 2, opt, c);
  const auto r1 = value_bias_study(m2, pi, shifted, 30, opt, rng);
  CHECK(r1.mean_bias == doctest::Approx(c / r1.denominator).epsilon(1e-12));
  CHECK(r1.std_bias < 1e-12);
}

TEST_CASE("value_bias_study: MC estimate matches the exact tabular plan value on M2") {
  const env::TabularEnv m2(env::toggle_mdp(), "m2");
  const auto pi = testing::linear_actor(Vector{{0.4, -0.3}}, Vector{{-0.5, 0.0}});
  const auto table = tabular::evaluate_policy<double>(m2.mdp(), actor::induced_policy(pi, m2), 2, false, 0.0, 1e-13);
  // a deliberately biased critic: the exact values scaled by 0.8
  auto scaled = table;
  scaled.values *= 0.8;
  const critic::TabularPlanValue critic(scaled, 2);

  MonteCarloOptions opt;
  opt.gamma = 0.9;
  opt.n_rollouts = 200;
  Rng rng(9);
  const auto report = value_bias_study(m2, pi, critic, 40, opt, rng);
  Vector q_hat(40), q_exact(40);
  double se2 = 0.0;
  for (Index i = 0; i < 40; ++i) {
    const auto& s = report.samples[static_cast<std::size_t>(i)];
    Index st = 0;
    s.state.maxCoeff(&st);
    const std::vector<Index> bins{env::action_bin(s.plan(0, 0), 2), env::action_bin(s.plan(1, 0), 2)};
    q_hat(i) = s.q_hat;
    q_exact(i) = table(st, bins);
    CHECK(std::abs(s.q_mc - q_exact(i)) < 4.0 * s.q_mc_se + 2e-3);
    se2 += s.q_mc_se * s.q_mc_se;
  }
  const auto [exact_mean, exact_std] = normalized_bias(q_hat, q_exact);
  const double sigma = std::sqrt(se2) / 40.0 / report.denominator * (1.0 + std::abs(exact_mean));
  CHECK(std::abs(report.mean_bias - exact_mean) < 3.0 * sigma + 1e-3);
  CHECK(exact_mean == doctest::Approx(-0.2).epsilon(1e-9));
}
